#include "diffquant/config.hpp"

#include <set>

#include "json.hpp"

#include "diffquant/errors.hpp"
#include "diffquant/serialize.hpp"

namespace diffquant {

namespace {

using nlohmann::json;

// Tracks which keys of one JSON object were consumed; anything left over is
// reported by its full dotted path.
class StrictObject {
  public:
    StrictObject(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config section " + path_ + " must be an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const json& at(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <typename T>
    void read(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config key " + dotted(key) + " has the wrong type");
        }
    }

    json section(const char* key) {
        if (!j_.contains(key)) return json::object();
        seen_.insert(key);
        return j_.at(key);
    }

    std::string dotted(const char* key) const {
        return path_.empty() ? std::string(key) : path_ + "." + key;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (seen_.count(it.key()) == 0) {
                throw ConfigError("unknown config key: " + dotted(it.key().c_str()));
            }
        }
    }

  private:
    json j_;
    std::string path_;
    std::set<std::string> seen_;
};

// null is accepted as "use the default" for optional numeric keys.
void read_optional_double(StrictObject& obj, const char* key, double& out) {
    if (!obj.has(key)) return;
    const json& v = obj.at(key);
    if (v.is_null()) return;
    if (!v.is_number()) throw ConfigError("config key " + obj.dotted(key) + " must be a number");
    out = v.get<double>();
}

void read_optional_int(StrictObject& obj, const char* key, int& out) {
    if (!obj.has(key)) return;
    const json& v = obj.at(key);
    if (v.is_null()) return;
    if (!v.is_number_integer()) {
        throw ConfigError("config key " + obj.dotted(key) + " must be an integer");
    }
    out = v.get<int>();
}

}  // namespace

double RunConfig::resolved_mu() const {
    return calib_mu < 0.0 ? 0.4 * static_cast<double>(T) : calib_mu;
}

int RunConfig::resolved_t() const {
    return calib_t < 0 ? static_cast<int>(round_half_even(0.5 * static_cast<double>(T)))
                       : calib_t;
}

void RunConfig::validate() const {
    if (dataset_n < 2) throw ConfigError("dataset.n must be >= 2");
    if (T < 2) throw ConfigError("schedule.T must be >= 2");
    if (sched_kind == ScheduleKind::ConstantBeta &&
        (const_beta <= 0.0 || const_beta >= 1.0)) {
        throw ConfigError("schedule.const_beta must be in (0, 1)");
    }
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0) {
        throw ConfigError("model.time_embed_dim must be even and >= 2");
    }
    if (hidden_dims.empty()) throw ConfigError("model.hidden_dims must be nonempty");
    for (int h : hidden_dims) {
        if (h < 1) throw ConfigError("model.hidden_dims entries must be >= 1");
    }
    train.validate();
    if (sampler.num_steps < 1 || sampler.num_steps > T) {
        throw ConfigError("sampler.steps must be in [1, T]");
    }
    if (sampler.kind == SamplerKind::DDPM && sampler.num_steps != T) {
        throw ConfigError("sampler.steps must equal T for the ancestral sampler");
    }
    if (sampler.eta < 0.0 || sampler.eta > 1.0) throw ConfigError("sampler.eta must be in [0, 1]");
    if (bits < 2 || bits > 32) throw ConfigError("quant.bits must be in [2, 32]");
    metric.validate();
    search.validate();
    if (hooks.bits < 2 || hooks.bits > 32) {
        throw ConfigError("quant.output_hooks.bits must be in [2, 32]");
    }
    if (hooks.fit_samples < 1) throw ConfigError("quant.output_hooks.fit_samples must be >= 1");
    if (calib_n < 1) throw ConfigError("calibration.n must be >= 1");
    if (calib_mu >= 0.0 && calib_mu > 0.5 * static_cast<double>(T)) {
        throw ConfigError("calibration.mu must satisfy mu <= T/2");
    }
    if (calib_t > T) throw ConfigError("calibration.t must be in [0, T]");
    if (n_gen < 2 || n_ref < 2) throw ConfigError("eval sample counts must be >= 2");
    if (n_proj < 1) throw ConfigError("eval.n_proj must be >= 1");
    if (eval_seeds.empty()) throw ConfigError("eval.seeds must be nonempty");
    if (out_dir.empty()) throw ConfigError("io.out_dir must be nonempty");
}

QuantMetric metric_from_string(const std::string& s, int kl_bins) {
    if (s == "l1") return QuantMetric::l1();
    if (s == "cosine") return QuantMetric::cosine();
    if (s == "kl") return QuantMetric::kl(kl_bins);
    if (s.rfind("lp", 0) == 0 && s.size() > 2) {
        try {
            std::size_t used = 0;
            const double p = std::stod(s.substr(2), &used);
            if (used == s.size() - 2) return QuantMetric::lp(p);
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("unknown quant metric: " + s +
                      " (expected l1, cosine, kl, or lp<p> such as lp2.4)");
}

RunConfig parse_run_config(const std::string& json_text) {
    json root_json;
    try {
        root_json = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig cfg;
    StrictObject root(root_json, "");
    root.read("seed", cfg.seed);

    {
        StrictObject ds(root.section("dataset"), "dataset");
        std::string kind = to_string(cfg.dataset_kind);
        ds.read("kind", kind);
        cfg.dataset_kind = dataset_kind_from_string(kind);
        ds.read("n", cfg.dataset_n);
        ds.read("seed", cfg.dataset_seed);
        ds.finish();
    }
    {
        StrictObject sc(root.section("schedule"), "schedule");
        std::string kind = to_string(cfg.sched_kind);
        sc.read("kind", kind);
        cfg.sched_kind = schedule_kind_from_string(kind);
        sc.read("T", cfg.T);
        sc.read("const_beta", cfg.const_beta);
        sc.finish();
    }
    {
        StrictObject mo(root.section("model"), "model");
        mo.read("time_embed_dim", cfg.time_embed_dim);
        mo.read("hidden_dims", cfg.hidden_dims);
        mo.finish();
    }
    {
        StrictObject tr(root.section("train"), "train");
        tr.read("lr", cfg.train.lr);
        tr.read("batch", cfg.train.batch);
        tr.read("iters", cfg.train.iters);
        if (tr.has("seed")) {
            tr.read("seed", cfg.train.seed);
            cfg.train_seed_set = true;
        }
        tr.read("adam_beta1", cfg.train.adam_beta1);
        tr.read("adam_beta2", cfg.train.adam_beta2);
        tr.read("adam_eps", cfg.train.adam_eps);
        tr.finish();
    }
    {
        StrictObject sa(root.section("sampler"), "sampler");
        std::string kind = to_string(cfg.sampler.kind);
        sa.read("kind", kind);
        cfg.sampler.kind = sampler_kind_from_string(kind);
        sa.read("steps", cfg.sampler.num_steps);
        sa.read("eta", cfg.sampler.eta);
        std::string vmode = to_string(cfg.sampler.variance_mode);
        sa.read("variance_mode", vmode);
        cfg.sampler.variance_mode = variance_mode_from_string(vmode);
        sa.read("clip_x0", cfg.sampler.clip_x0);
        sa.read("clip", cfg.sampler.clip);
        sa.finish();
    }
    {
        StrictObject qu(root.section("quant"), "quant");
        qu.read("bits", cfg.bits);
        int kl_bins = cfg.metric.bins;
        read_optional_int(qu, "kl_bins", kl_bins);
        std::string metric = cfg.metric.name();
        qu.read("metric", metric);
        cfg.metric = metric_from_string(metric, kl_bins);
        {
            StrictObject se(qu.section("search"), "quant.search");
            se.read("num_candidates", cfg.search.num_candidates);
            se.read("min_scale_fraction", cfg.search.min_scale_fraction);
            se.finish();
        }
        {
            StrictObject ho(qu.section("output_hooks"), "quant.output_hooks");
            ho.read("mu", cfg.hooks.mu);
            ho.read("sigma", cfg.hooks.sigma);
            ho.read("x_prev", cfg.hooks.x_prev);
            ho.read("bits", cfg.hooks.bits);
            ho.read("fit_samples", cfg.hooks.fit_samples);
            ho.finish();
        }
        qu.finish();
    }
    {
        StrictObject ca(root.section("calibration"), "calibration");
        std::string kind = to_string(cfg.collector);
        ca.read("collector", kind);
        cfg.collector = collector_kind_from_string(kind);
        ca.read("n", cfg.calib_n);
        read_optional_double(ca, "mu", cfg.calib_mu);
        read_optional_int(ca, "t", cfg.calib_t);
        ca.finish();
    }
    {
        StrictObject ev(root.section("eval"), "eval");
        ev.read("n_gen", cfg.n_gen);
        ev.read("n_ref", cfg.n_ref);
        ev.read("n_proj", cfg.n_proj);
        ev.read("data_seed", cfg.data_seed);
        ev.read("projection_seed", cfg.projection_seed);
        ev.read("seeds", cfg.eval_seeds);
        ev.finish();
    }
    {
        StrictObject io(root.section("io"), "io");
        io.read("out_dir", cfg.out_dir);
        io.finish();
    }
    root.finish();

    if (!cfg.train_seed_set) cfg.train.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    return parse_run_config(read_file_bytes(path));
}

std::string effective_config(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["dataset"] = json{{"kind", to_string(cfg.dataset_kind)},
                        {"n", cfg.dataset_n},
                        {"seed", cfg.dataset_seed}};
    j["schedule"] = json{{"kind", to_string(cfg.sched_kind)},
                         {"T", cfg.T},
                         {"const_beta", cfg.const_beta}};
    j["model"] = json{{"time_embed_dim", cfg.time_embed_dim},
                      {"hidden_dims", cfg.hidden_dims}};
    j["train"] = json{{"lr", cfg.train.lr},
                      {"batch", cfg.train.batch},
                      {"iters", cfg.train.iters},
                      {"seed", cfg.train.seed},
                      {"adam_beta1", cfg.train.adam_beta1},
                      {"adam_beta2", cfg.train.adam_beta2},
                      {"adam_eps", cfg.train.adam_eps}};
    j["sampler"] = json{{"kind", to_string(cfg.sampler.kind)},
                        {"steps", cfg.sampler.num_steps},
                        {"eta", cfg.sampler.eta},
                        {"variance_mode", to_string(cfg.sampler.variance_mode)},
                        {"clip_x0", cfg.sampler.clip_x0},
                        {"clip", cfg.sampler.clip}};
    j["quant"] = json{{"bits", cfg.bits},
                      {"metric", cfg.metric.name()},
                      {"kl_bins", cfg.metric.bins},
                      {"search", json{{"num_candidates", cfg.search.num_candidates},
                                      {"min_scale_fraction", cfg.search.min_scale_fraction}}},
                      {"output_hooks", json{{"mu", cfg.hooks.mu},
                                            {"sigma", cfg.hooks.sigma},
                                            {"x_prev", cfg.hooks.x_prev},
                                            {"bits", cfg.hooks.bits},
                                            {"fit_samples", cfg.hooks.fit_samples}}}};
    j["calibration"] = json{{"collector", to_string(cfg.collector)},
                            {"n", cfg.calib_n},
                            {"mu", cfg.resolved_mu()},
                            {"t", cfg.resolved_t()}};
    j["eval"] = json{{"n_gen", cfg.n_gen},
                     {"n_ref", cfg.n_ref},
                     {"n_proj", cfg.n_proj},
                     {"data_seed", cfg.data_seed},
                     {"projection_seed", cfg.projection_seed},
                     {"seeds", cfg.eval_seeds}};
    j["io"] = json{{"out_dir", cfg.out_dir}};
    return j.dump(2);
}

}  // namespace diffquant
