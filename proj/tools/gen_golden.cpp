// Regenerates the golden fixtures under tests/golden. Run from the repository
// root after an intentional numerics change, then review the diff before
// committing; the unit suite compares against these files byte for byte.

#include <cstdio>
#include <string>
#include <vector>

#include "diffquant/calibration.hpp"
#include "diffquant/dataset.hpp"
#include "diffquant/diffusion.hpp"
#include "diffquant/evaluation.hpp"
#include "diffquant/schedule.hpp"
#include "diffquant/score_net.hpp"
#include "diffquant/serialize.hpp"
#include "diffquant/training.hpp"

using namespace diffquant;

int main(int argc, char** argv) {
    std::string out_dir = argc > 1 ? argv[1] : "tests/golden";

    // Small on purpose: T=50 and [32, 32] keep regeneration fast while still
    // exercising every stage end to end. T below ~30 is avoided: the linear
    // schedule's 1000/T scaling then pushes beta toward 1 and the quantized
    // chain amplifies its own rounding error into nonsense.
    ToyDataset data = make_dataset(DatasetKind::GaussianMixture, 512, 11);
    NoiseSchedule sched = make_schedule(ScheduleKind::Linear, 50);
    ScoreNetwork init = ScoreNetwork::create(2, 8, {32, 32}, 5);

    TrainConfig tc;
    tc.iters = 2000;
    tc.batch = 64;
    tc.seed = 5;
    TrainResult tr = train(init, sched, data, tc);

    Checkpoint ckpt;
    ckpt.net = tr.net;
    ckpt.sched_kind = ScheduleKind::Linear;
    ckpt.T = sched.T;
    ckpt.train = tc;
    ckpt.seed = 5;
    std::string ckpt_path = out_dir + "/tiny.ckpt";
    save_checkpoint(ckpt_path, ckpt);
    LoadedCheckpoint loaded = load_checkpoint(ckpt_path);
    std::fprintf(stderr, "tiny.ckpt id %s\n", loaded.id.c_str());

    // 256 chain states give the activation fit enough range coverage that the
    // 8-bit chain stays contractive; 64 leave the x_T tails outside the window
    // and the quantized sampler walks off.
    CalibrationSet calib = collect_ndtc(tr.net, sched, 256, 20.0, 13);
    calib.manifest.checkpoint_id = loaded.id;
    save_calibration(out_dir + "/tiny.calib", calib);

    QuantMetric metric = QuantMetric::lp(2.4);
    SearchConfig search;
    QuantizedNetwork qnet = calibrate_network(tr.net, calib, sched, metric, 8, search);

    QuantizedModel qm;
    qm.qnet = qnet;
    qm.bits = 8;
    qm.metric = metric;
    qm.search = search;
    qm.checkpoint_id = loaded.id;
    qm.calib_collector = to_string(CollectorKind::NDTC);
    qm.sched_kind = ScheduleKind::Linear;
    qm.T = sched.T;
    save_qmodel(out_dir + "/tiny.qmodel", qm);

    SamplerConfig ddim;
    ddim.kind = SamplerKind::DDIM;
    ddim.num_steps = 10;
    SampleBatch batch = sample_batch(QuantizedNetwork::wrap_fp(tr.net), ddim, 8, sched, 21);
    save_tensor(out_dir + "/tiny_samples.tensor", batch.samples);

    SamplerConfig ddpm;
    ddpm.kind = SamplerKind::DDPM;
    ddpm.num_steps = sched.T;
    TrajectoryDivergence traj = trajectory_divergence(tr.net, qnet, sched, ddpm, 16, 31);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < traj.ts.size(); ++i) {
        rows.push_back({std::to_string(traj.ts[i]), format_double(traj.gap[i])});
    }
    write_csv(out_dir + "/tiny_traj_gap.csv", {"t", "gap"}, rows);

    std::fprintf(stderr, "golden fixtures written to %s\n", out_dir.c_str());
    return 0;
}
