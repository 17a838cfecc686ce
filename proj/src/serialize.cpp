#include "diffquant/serialize.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "diffquant/errors.hpp"
#include "diffquant/version.hpp"

namespace diffquant {

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are written as raw little-endian doubles");

using nlohmann::json;

json parse_header_line(const std::string& bytes, std::size_t& offset, const char* what) {
    const std::size_t nl = bytes.find('\n', offset);
    if (nl == std::string::npos) {
        throw InputError(std::string("corrupt ") + what + ": missing header line");
    }
    json j;
    try {
        j = json::parse(bytes.substr(offset, nl - offset));
    } catch (const json::exception& e) {
        throw InputError(std::string("corrupt ") + what + ": bad header: " + e.what());
    }
    offset = nl + 1;
    return j;
}

void check_format(const json& header, const char* expected_kind, const char* what) {
    if (!header.contains("kind") || header["kind"] != expected_kind) {
        throw IncompatibleError(std::string(what) + ": wrong artifact kind");
    }
    if (!header.contains("format_version") ||
        header["format_version"].get<int>() != kFormatVersion) {
        throw IncompatibleError(std::string(what) + ": unsupported format version");
    }
}

json schedule_to_json(ScheduleKind kind, int T, double const_beta) {
    return json{{"kind", to_string(kind)}, {"T", T}, {"const_beta", const_beta}};
}

void schedule_from_json(const json& j, ScheduleKind& kind, int& T, double& const_beta) {
    kind = schedule_kind_from_string(j.at("kind").get<std::string>());
    T = j.at("T").get<int>();
    const_beta = j.at("const_beta").get<double>();
}

json metric_to_json(const QuantMetric& m) {
    const char* kind = "lp";
    switch (m.kind) {
        case QuantMetric::Kind::Lp: kind = "lp"; break;
        case QuantMetric::Kind::L1: kind = "l1"; break;
        case QuantMetric::Kind::Cosine: kind = "cosine"; break;
        case QuantMetric::Kind::KL: kind = "kl"; break;
    }
    return json{{"kind", kind}, {"p", m.p}, {"bins", m.bins}};
}

QuantMetric metric_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    QuantMetric m;
    if (kind == "lp") {
        m = QuantMetric::lp(j.at("p").get<double>());
    } else if (kind == "l1") {
        m = QuantMetric::l1();
    } else if (kind == "cosine") {
        m = QuantMetric::cosine();
    } else if (kind == "kl") {
        m = QuantMetric::kl(j.at("bins").get<int>());
    } else {
        throw InputError("unknown metric kind in artifact: " + kind);
    }
    return m;
}

json params_to_json(const QuantParams& q) {
    return json{{"scales", q.scales},
                {"zero_points", q.zero_points},
                {"bits", q.bits},
                {"signed", q.is_signed},
                {"granularity",
                 q.granularity == Granularity::PerChannel ? "per_channel" : "per_tensor"},
                {"axis", q.axis}};
}

QuantParams params_from_json(const json& j) {
    QuantParams q;
    q.scales = j.at("scales").get<std::vector<double>>();
    q.zero_points = j.at("zero_points").get<std::vector<std::int64_t>>();
    q.bits = j.at("bits").get<int>();
    q.is_signed = j.at("signed").get<bool>();
    const std::string g = j.at("granularity").get<std::string>();
    if (g == "per_channel") {
        q.granularity = Granularity::PerChannel;
    } else if (g == "per_tensor") {
        q.granularity = Granularity::PerTensor;
    } else {
        throw InputError("unknown granularity in artifact: " + g);
    }
    q.axis = j.at("axis").get<int>();
    q.validate();
    return q;
}

json model_arch_to_json(const ScoreNetwork& net) {
    return json{{"input_dim", net.input_dim},
                {"time_embed_dim", net.time_embed_dim},
                {"hidden_dims", net.hidden_dims}};
}

void model_arch_from_json(const json& j, ScoreNetwork& net) {
    net.input_dim = j.at("input_dim").get<int>();
    net.time_embed_dim = j.at("time_embed_dim").get<int>();
    net.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
}

void read_layers(const std::string& bytes, std::size_t& offset, ScoreNetwork& net,
                 const char* what) {
    const std::size_t num_layers = net.hidden_dims.size() + 1;
    net.layers.clear();
    for (std::size_t l = 0; l < num_layers; ++l) {
        AffineLayer layer;
        layer.W = parse_tensor(bytes, offset);
        layer.b = parse_tensor(bytes, offset);
        net.layers.push_back(std::move(layer));
    }
    try {
        net.validate();
    } catch (const Error& e) {
        throw InputError(std::string("corrupt ") + what + ": " + e.what());
    }
    if (offset != bytes.size()) {
        throw InputError(std::string("corrupt ") + what + ": trailing bytes");
    }
}

std::string sanitize_xml(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt_coord(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// Maps data coordinates to a pixel viewport with a small margin.
struct Viewport {
    double lo_x, hi_x, lo_y, hi_y;
    double px, py, pw, ph;

    double x(double v) const {
        const double span = hi_x > lo_x ? hi_x - lo_x : 1.0;
        return px + (v - lo_x) / span * pw;
    }
    double y(double v) const {
        const double span = hi_y > lo_y ? hi_y - lo_y : 1.0;
        return py + ph - (v - lo_y) / span * ph;
    }
};

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= static_cast<std::uint64_t>(p[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex16(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void atomic_write_file(const std::string& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw InputError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        std::error_code ec2;
        fs::remove(tmp, ec2);
        throw InputError("rename failed for " + path + ": " + ec.message());
    }
}

std::string read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInputError("missing input file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw InputError("read failed: " + path);
    return bytes;
}

void append_tensor(std::string& out, const Tensor& t) {
    json header;
    header["shape"] = t.shape;
    out += header.dump();
    out += '\n';
    const std::size_t nbytes = static_cast<std::size_t>(t.size()) * sizeof(double);
    const std::size_t pos = out.size();
    out.resize(pos + nbytes);
    if (nbytes > 0) std::memcpy(out.data() + pos, t.data.data(), nbytes);
}

Tensor parse_tensor(const std::string& bytes, std::size_t& offset) {
    json header = parse_header_line(bytes, offset, "tensor");
    std::vector<std::int64_t> shape;
    try {
        shape = header.at("shape").get<std::vector<std::int64_t>>();
    } catch (const json::exception& e) {
        throw InputError(std::string("corrupt tensor: bad shape: ") + e.what());
    }
    Tensor t = Tensor::zeros(shape);
    const std::size_t nbytes = static_cast<std::size_t>(t.size()) * sizeof(double);
    if (bytes.size() - offset < nbytes) {
        throw InputError("corrupt tensor: truncated payload");
    }
    if (nbytes > 0) std::memcpy(t.data.data(), bytes.data() + offset, nbytes);
    offset += nbytes;
    for (double v : t.data) {
        if (std::isnan(v) || std::isinf(v)) {
            throw InputError("corrupt tensor: non-finite payload value");
        }
    }
    return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::string bytes;
    append_tensor(bytes, t);
    atomic_write_file(path, bytes);
}

Tensor load_tensor(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    std::size_t offset = 0;
    Tensor t = parse_tensor(bytes, offset);
    if (offset != bytes.size()) throw InputError("corrupt tensor: trailing bytes");
    return t;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    ckpt.net.validate();
    json header;
    header["format_version"] = kFormatVersion;
    header["kind"] = "checkpoint";
    header["model"] = model_arch_to_json(ckpt.net);
    header["seed"] = ckpt.seed;
    header["schedule"] = schedule_to_json(ckpt.sched_kind, ckpt.T, ckpt.const_beta);
    header["train"] = json{{"lr", ckpt.train.lr},           {"batch", ckpt.train.batch},
                           {"iters", ckpt.train.iters},     {"seed", ckpt.train.seed},
                           {"adam_beta1", ckpt.train.adam_beta1},
                           {"adam_beta2", ckpt.train.adam_beta2},
                           {"adam_eps", ckpt.train.adam_eps}};
    std::string bytes = header.dump();
    bytes += '\n';
    for (const AffineLayer& layer : ckpt.net.layers) {
        append_tensor(bytes, layer.W);
        append_tensor(bytes, layer.b);
    }
    atomic_write_file(path, bytes);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    std::size_t offset = 0;
    json header = parse_header_line(bytes, offset, "checkpoint");
    check_format(header, "checkpoint", "checkpoint");

    LoadedCheckpoint loaded;
    try {
        model_arch_from_json(header.at("model"), loaded.ckpt.net);
        loaded.ckpt.seed = header.at("seed").get<std::uint64_t>();
        schedule_from_json(header.at("schedule"), loaded.ckpt.sched_kind, loaded.ckpt.T,
                           loaded.ckpt.const_beta);
        const json& tr = header.at("train");
        loaded.ckpt.train.lr = tr.at("lr").get<double>();
        loaded.ckpt.train.batch = tr.at("batch").get<int>();
        loaded.ckpt.train.iters = tr.at("iters").get<int>();
        loaded.ckpt.train.seed = tr.at("seed").get<std::uint64_t>();
        loaded.ckpt.train.adam_beta1 = tr.at("adam_beta1").get<double>();
        loaded.ckpt.train.adam_beta2 = tr.at("adam_beta2").get<double>();
        loaded.ckpt.train.adam_eps = tr.at("adam_eps").get<double>();
    } catch (const json::exception& e) {
        throw InputError(std::string("corrupt checkpoint: ") + e.what());
    }
    read_layers(bytes, offset, loaded.ckpt.net, "checkpoint");
    loaded.id = hex16(fnv1a64(bytes.data(), bytes.size()));
    return loaded;
}

void save_calibration(const std::string& path, const CalibrationSet& set) {
    const CalibManifest& m = set.manifest;
    json header;
    header["format_version"] = kFormatVersion;
    header["kind"] = "calibration";
    header["collector"] = m.collector;
    header["seed"] = m.seed;
    header["n"] = m.n;
    header["mu"] = m.mu;
    header["t_fixed"] = m.t_fixed;
    header["schedule"] =
        json{{"kind", m.schedule_kind}, {"T", m.T}, {"const_beta", m.const_beta}};
    header["checkpoint_id"] = m.checkpoint_id;
    header["dataset"] =
        json{{"kind", m.dataset_kind}, {"seed", m.dataset_seed}, {"n", m.dataset_n}};
    header["dim"] = m.dim;

    std::string bytes = header.dump();
    bytes += '\n';
    const std::size_t pos = bytes.size();
    const std::size_t tbytes = set.timesteps.size() * sizeof(std::uint32_t);
    bytes.resize(pos + tbytes);
    if (tbytes > 0) std::memcpy(bytes.data() + pos, set.timesteps.data(), tbytes);
    append_tensor(bytes, set.samples);
    atomic_write_file(path, bytes);
}

CalibrationSet load_calibration(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    std::size_t offset = 0;
    json header = parse_header_line(bytes, offset, "calibration set");
    check_format(header, "calibration", "calibration set");

    CalibrationSet set;
    CalibManifest& m = set.manifest;
    try {
        m.collector = header.at("collector").get<std::string>();
        m.seed = header.at("seed").get<std::uint64_t>();
        m.n = header.at("n").get<int>();
        m.mu = header.at("mu").get<double>();
        m.t_fixed = header.at("t_fixed").get<int>();
        const json& sj = header.at("schedule");
        m.schedule_kind = sj.at("kind").get<std::string>();
        m.T = sj.at("T").get<int>();
        m.const_beta = sj.at("const_beta").get<double>();
        m.checkpoint_id = header.at("checkpoint_id").get<std::string>();
        const json& dj = header.at("dataset");
        m.dataset_kind = dj.at("kind").get<std::string>();
        m.dataset_seed = dj.at("seed").get<std::uint64_t>();
        m.dataset_n = dj.at("n").get<int>();
        m.dim = header.at("dim").get<int>();
    } catch (const json::exception& e) {
        throw InputError(std::string("corrupt calibration set: ") + e.what());
    }
    if (m.n < 0) throw InputError("corrupt calibration set: negative n");

    const std::size_t tbytes = static_cast<std::size_t>(m.n) * sizeof(std::uint32_t);
    if (bytes.size() - offset < tbytes) {
        throw InputError("corrupt calibration set: truncated timesteps");
    }
    set.timesteps.resize(static_cast<std::size_t>(m.n));
    if (tbytes > 0) std::memcpy(set.timesteps.data(), bytes.data() + offset, tbytes);
    offset += tbytes;
    set.samples = parse_tensor(bytes, offset);
    if (offset != bytes.size()) throw InputError("corrupt calibration set: trailing bytes");
    set.validate(m.T);
    return set;
}

void save_qmodel(const std::string& path, const QuantizedModel& qm) {
    qm.qnet.base.validate();
    json header;
    header["format_version"] = kFormatVersion;
    header["kind"] = "qmodel";
    header["model"] = model_arch_to_json(qm.qnet.base);
    header["bits"] = qm.bits;
    header["metric"] = metric_to_json(qm.metric);
    header["search"] = json{{"num_candidates", qm.search.num_candidates},
                            {"min_scale_fraction", qm.search.min_scale_fraction}};
    json hooks;
    hooks["bits"] = qm.hook_cfg.bits;
    hooks["fit_samples"] = qm.hook_cfg.fit_samples;
    hooks["mu"] = qm.qnet.hooks.mu ? params_to_json(*qm.qnet.hooks.mu) : json(nullptr);
    hooks["sigma"] = qm.qnet.hooks.sigma ? params_to_json(*qm.qnet.hooks.sigma) : json(nullptr);
    hooks["x_prev"] =
        qm.qnet.hooks.x_prev ? params_to_json(*qm.qnet.hooks.x_prev) : json(nullptr);
    header["hooks"] = hooks;
    json wparams = json::array();
    for (const QuantParams& q : qm.qnet.weight_params) wparams.push_back(params_to_json(q));
    header["weight_params"] = wparams;
    json aparams = json::array();
    for (const QuantParams& q : qm.qnet.activation_params) {
        aparams.push_back(params_to_json(q));
    }
    header["activation_params"] = aparams;
    header["checkpoint_id"] = qm.checkpoint_id;
    header["calib_collector"] = qm.calib_collector;
    header["schedule"] = schedule_to_json(qm.sched_kind, qm.T, qm.const_beta);

    std::string bytes = header.dump();
    bytes += '\n';
    for (const AffineLayer& layer : qm.qnet.base.layers) {
        append_tensor(bytes, layer.W);
        append_tensor(bytes, layer.b);
    }
    atomic_write_file(path, bytes);
}

QuantizedModel load_qmodel(const std::string& path) {
    const std::string bytes = read_file_bytes(path);
    std::size_t offset = 0;
    json header = parse_header_line(bytes, offset, "quantized model");
    check_format(header, "qmodel", "quantized model");

    QuantizedModel qm;
    try {
        model_arch_from_json(header.at("model"), qm.qnet.base);
        qm.bits = header.at("bits").get<int>();
        qm.metric = metric_from_json(header.at("metric"));
        const json& sj = header.at("search");
        qm.search.num_candidates = sj.at("num_candidates").get<int>();
        qm.search.min_scale_fraction = sj.at("min_scale_fraction").get<double>();
        const json& hj = header.at("hooks");
        qm.hook_cfg.bits = hj.at("bits").get<int>();
        qm.hook_cfg.fit_samples = hj.at("fit_samples").get<int>();
        if (!hj.at("mu").is_null()) {
            qm.qnet.hooks.mu = params_from_json(hj.at("mu"));
            qm.hook_cfg.mu = true;
        }
        if (!hj.at("sigma").is_null()) {
            qm.qnet.hooks.sigma = params_from_json(hj.at("sigma"));
            qm.hook_cfg.sigma = true;
        }
        if (!hj.at("x_prev").is_null()) {
            qm.qnet.hooks.x_prev = params_from_json(hj.at("x_prev"));
            qm.hook_cfg.x_prev = true;
        }
        for (const json& q : header.at("weight_params")) {
            qm.qnet.weight_params.push_back(params_from_json(q));
        }
        for (const json& q : header.at("activation_params")) {
            qm.qnet.activation_params.push_back(params_from_json(q));
        }
        qm.checkpoint_id = header.at("checkpoint_id").get<std::string>();
        qm.calib_collector = header.at("calib_collector").get<std::string>();
        schedule_from_json(header.at("schedule"), qm.sched_kind, qm.T, qm.const_beta);
    } catch (const json::exception& e) {
        throw InputError(std::string("corrupt quantized model: ") + e.what());
    }
    read_layers(bytes, offset, qm.qnet.base, "quantized model");
    const std::size_t num_layers = qm.qnet.base.layers.size();
    if (!qm.qnet.weight_params.empty() && qm.qnet.weight_params.size() != num_layers) {
        throw InputError("corrupt quantized model: weight param count mismatch");
    }
    if (!qm.qnet.activation_params.empty() &&
        qm.qnet.activation_params.size() != num_layers) {
        throw InputError("corrupt quantized model: activation param count mismatch");
    }
    return qm;
}

std::string csv_line(const std::vector<std::string>& cols) {
    std::string out;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        if (i > 0) out += ',';
        const std::string& c = cols[i];
        if (c.find_first_of(",\"\n") != std::string::npos) {
            out += '"';
            for (char ch : c) {
                if (ch == '"') out += '"';
                out += ch;
            }
            out += '"';
        } else {
            out += c;
        }
    }
    out += '\n';
    return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::string bytes = csv_line(header);
    for (const auto& row : rows) bytes += csv_line(row);
    atomic_write_file(path, bytes);
}

std::string svg_scatter(const std::vector<ScatterSeries>& series, const std::string& title) {
    const double W = 640, H = 640;
    Viewport vp{0, 1, 0, 1, 48, 40, W - 72, H - 88};
    bool first = true;
    for (const ScatterSeries& s : series) {
        for (std::int64_t i = 0; i < s.points.dim(0); ++i) {
            const double x = s.points.at(i, 0);
            const double y = s.points.at(i, 1);
            if (first) {
                vp.lo_x = vp.hi_x = x;
                vp.lo_y = vp.hi_y = y;
                first = false;
            }
            vp.lo_x = std::min(vp.lo_x, x);
            vp.hi_x = std::max(vp.hi_x, x);
            vp.lo_y = std::min(vp.lo_y, y);
            vp.hi_y = std::max(vp.hi_y, y);
        }
    }
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" "
                      "height=\"640\" viewBox=\"0 0 640 640\">\n";
    out += "<rect width=\"640\" height=\"640\" fill=\"white\"/>\n";
    out += "<text x=\"48\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" +
           sanitize_xml(title) + "</text>\n";
    double legend_y = 56;
    for (const ScatterSeries& s : series) {
        out += "<g fill=\"" + sanitize_xml(s.color) + "\" fill-opacity=\"0.55\">\n";
        for (std::int64_t i = 0; i < s.points.dim(0); ++i) {
            out += "<circle cx=\"" + fmt_coord(vp.x(s.points.at(i, 0))) + "\" cy=\"" +
                   fmt_coord(vp.y(s.points.at(i, 1))) + "\" r=\"2\"/>\n";
        }
        out += "</g>\n";
        out += "<circle cx=\"500\" cy=\"" + fmt_coord(legend_y) + "\" r=\"4\" fill=\"" +
               sanitize_xml(s.color) + "\"/>\n";
        out += "<text x=\"510\" y=\"" + fmt_coord(legend_y + 4) +
               "\" font-family=\"sans-serif\" font-size=\"12\">" + sanitize_xml(s.name) +
               "</text>\n";
        legend_y += 18;
    }
    out += "</svg>\n";
    return out;
}

std::string svg_line_chart(const std::vector<double>& ys, const std::string& title,
                           const std::string& y_label) {
    const double W = 720, H = 360;
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" "
                      "height=\"360\" viewBox=\"0 0 720 360\">\n";
    out += "<rect width=\"720\" height=\"360\" fill=\"white\"/>\n";
    out += "<text x=\"48\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\">" +
           sanitize_xml(title) + "</text>\n";
    out += "<text x=\"8\" y=\"40\" font-family=\"sans-serif\" font-size=\"11\">" +
           sanitize_xml(y_label) + "</text>\n";
    if (!ys.empty()) {
        Viewport vp{0, static_cast<double>(ys.size() > 1 ? ys.size() - 1 : 1),
                    0, 1, 48, 48, W - 72, H - 96};
        vp.lo_y = vp.hi_y = ys[0];
        for (double v : ys) {
            vp.lo_y = std::min(vp.lo_y, v);
            vp.hi_y = std::max(vp.hi_y, v);
        }
        std::string pts;
        for (std::size_t i = 0; i < ys.size(); ++i) {
            if (i > 0) pts += ' ';
            pts += fmt_coord(vp.x(static_cast<double>(i))) + "," + fmt_coord(vp.y(ys[i]));
        }
        out += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"" +
               pts + "\"/>\n";
        out += "<text x=\"48\" y=\"350\" font-family=\"sans-serif\" font-size=\"11\">min " +
               format_double(vp.lo_y) + ", max " + format_double(vp.hi_y) + "</text>\n";
    }
    out += "</svg>\n";
    return out;
}

std::string svg_hist_panels(const std::vector<HistPanel>& panels, const std::string& title) {
    const int cols = 3;
    const double pw = 220, ph = 170, margin = 16;
    const int rows = panels.empty() ? 1 : (static_cast<int>(panels.size()) + cols - 1) / cols;
    const double W = cols * (pw + margin) + margin;
    const double H = rows * (ph + margin) + margin + 32;
    std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_coord(W) +
                      "\" height=\"" + fmt_coord(H) + "\" viewBox=\"0 0 " + fmt_coord(W) +
                      " " + fmt_coord(H) + "\">\n";
    out += "<rect width=\"" + fmt_coord(W) + "\" height=\"" + fmt_coord(H) +
           "\" fill=\"white\"/>\n";
    out += "<text x=\"16\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\">" +
           sanitize_xml(title) + "</text>\n";
    for (std::size_t p = 0; p < panels.size(); ++p) {
        const HistPanel& panel = panels[p];
        const double ox = margin + static_cast<double>(p % cols) * (pw + margin);
        const double oy = 32 + margin + static_cast<double>(p / static_cast<std::size_t>(cols)) * (ph + margin);
        out += "<rect x=\"" + fmt_coord(ox) + "\" y=\"" + fmt_coord(oy) + "\" width=\"" +
               fmt_coord(pw) + "\" height=\"" + fmt_coord(ph) +
               "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
        out += "<text x=\"" + fmt_coord(ox + 6) + "\" y=\"" + fmt_coord(oy + 16) +
               "\" font-family=\"sans-serif\" font-size=\"11\">" + sanitize_xml(panel.title) +
               "</text>\n";
        double peak = 0.0;
        for (double c : panel.counts) peak = std::max(peak, c);
        if (peak <= 0.0) peak = 1.0;
        const double base = oy + ph - 10;
        const double bar_h = ph - 40;
        const double n_bins = panel.counts.empty() ? 1.0 : static_cast<double>(panel.counts.size());
        const double bw = (pw - 12) / n_bins;
        for (std::size_t b = 0; b < panel.counts.size(); ++b) {
            const double h = panel.counts[b] / peak * bar_h;
            out += "<rect x=\"" + fmt_coord(ox + 6 + static_cast<double>(b) * bw) + "\" y=\"" +
                   fmt_coord(base - h) + "\" width=\"" + fmt_coord(std::max(bw - 0.5, 0.5)) +
                   "\" height=\"" + fmt_coord(h) + "\" fill=\"#1f77b4\"/>\n";
        }
        // Quartile ticks over the value range.
        const double span = panel.hi > panel.lo ? panel.hi - panel.lo : 1.0;
        auto tick_x = [&](double v) { return ox + 6 + (v - panel.lo) / span * (pw - 12); };
        for (double q : {panel.q1, panel.median, panel.q3}) {
            out += "<line x1=\"" + fmt_coord(tick_x(q)) + "\" y1=\"" + fmt_coord(base + 2) +
                   "\" x2=\"" + fmt_coord(tick_x(q)) + "\" y2=\"" + fmt_coord(base + 8) +
                   "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
        }
    }
    out += "</svg>\n";
    return out;
}

}  // namespace diffquant
