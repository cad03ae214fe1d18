#include "mdn/config.hpp"

#include <fstream>
#include <sstream>

namespace mdn {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::MixMinusRef: return "MIX_MINUS_REF";
        case Variant::TarusMinusRef: return "TARUS_MINUS_REF";
        case Variant::MixMinusTarus: return "MIX_MINUS_TARUS";
        case Variant::MixMinusZero: return "MIX_MINUS_ZERO";
        case Variant::ParallelT: return "PARALLEL_T";
        case Variant::SingleBlock: return "SINGLE_BLOCK";
    }
    throw ContractError("bad variant enum");
}

Variant parse_variant(const std::string& name) {
    for (Variant v : {Variant::MixMinusRef, Variant::TarusMinusRef, Variant::MixMinusTarus,
                      Variant::MixMinusZero, Variant::ParallelT, Variant::SingleBlock})
        if (variant_name(v) == name) return v;
    throw ConfigError("unknown variant tag: " + name);
}

std::string dc_mode_name(DcMode m) { return m == DcMode::Final ? "final" : "per_block"; }

DcMode parse_dc_mode(const std::string& name) {
    if (name == "final") return DcMode::Final;
    if (name == "per_block") return DcMode::PerBlock;
    throw ConfigError("unknown dc_mode: " + name);
}

std::string merge_name(MergeMode m) { return m == MergeMode::Sum ? "sum" : "mean"; }

MergeMode parse_merge(const std::string& name) {
    if (name == "sum") return MergeMode::Sum;
    if (name == "mean") return MergeMode::Mean;
    throw ConfigError("unknown merge mode: " + name);
}

void ModelConfig::validate() const {
    if (channels < 1) throw ConfigError("c must be >= 1");
    if (blocks < 1) throw ConfigError("T must be >= 1");
    if (state_dim < 1) throw ConfigError("state_dim must be >= 1");
    if (depth < 0) throw ConfigError("depth must be >= 0");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel must be odd and positive");
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
}

namespace {

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + v);
    }
}

uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad seed for " + key + ": " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace

void RunConfig::apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [key, val] : kv) {
        if (key == "c") model.channels = to_int(key, val);
        else if (key == "T") model.blocks = to_int(key, val);
        else if (key == "state_dim") model.state_dim = to_int(key, val);
        else if (key == "depth") model.depth = to_int(key, val);
        else if (key == "kernel") model.kernel = to_int(key, val);
        else if (key == "lr") model.lr = to_double(key, val);
        else if (key == "batch") model.batch = to_int(key, val);
        else if (key == "epochs") model.epochs = to_int(key, val);
        else if (key == "seed") model.seed = to_u64(key, val);
        else if (key == "variant") model.variant = parse_variant(val);
        else if (key == "dc_mode") model.dc_mode = parse_dc_mode(val);
        else if (key == "merge") model.merge = parse_merge(val);
        else if (key == "fuse_add") model.fuse_add = to_bool(key, val);
        else if (key == "n") n_samples = to_int(key, val);
        else if (key == "size") size = to_int(key, val);
        else if (key == "n_ellipses") n_ellipses = to_int(key, val);
        else if (key == "leak") leak = to_bool(key, val);
        else if (key == "phase") phase = to_bool(key, val);
        else if (key == "accel") accel = to_double(key, val);
        else if (key == "center_fraction") center_fraction = to_double(key, val);
        else if (key == "mask_seed") mask_seed = to_u64(key, val);
        else if (key == "noise_sigma") noise_sigma = to_double(key, val);
        else if (key == "seeds") seeds = to_int(key, val);
        else if (key == "command") command = val;
        else if (key == "data") data_dir = val;
        else if (key == "out") out_dir = val;
        else if (key == "checkpoint") checkpoint = val;
        else throw ConfigError("unknown config key: " + key);
    }
    model.validate();
}

std::map<std::string, std::string> RunConfig::to_kv() const {
    std::map<std::string, std::string> kv;
    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    kv["c"] = std::to_string(model.channels);
    kv["T"] = std::to_string(model.blocks);
    kv["state_dim"] = std::to_string(model.state_dim);
    kv["depth"] = std::to_string(model.depth);
    kv["kernel"] = std::to_string(model.kernel);
    kv["lr"] = fmt(model.lr);
    kv["batch"] = std::to_string(model.batch);
    kv["epochs"] = std::to_string(model.epochs);
    kv["seed"] = std::to_string(model.seed);
    kv["variant"] = variant_name(model.variant);
    kv["dc_mode"] = dc_mode_name(model.dc_mode);
    kv["merge"] = merge_name(model.merge);
    kv["fuse_add"] = model.fuse_add ? "1" : "0";
    kv["n"] = std::to_string(n_samples);
    kv["size"] = std::to_string(size);
    kv["n_ellipses"] = std::to_string(n_ellipses);
    kv["leak"] = leak ? "1" : "0";
    kv["phase"] = phase ? "1" : "0";
    kv["accel"] = fmt(accel);
    kv["center_fraction"] = fmt(center_fraction);
    kv["mask_seed"] = std::to_string(mask_seed);
    kv["noise_sigma"] = fmt(noise_sigma);
    kv["seeds"] = std::to_string(seeds);
    if (!command.empty()) kv["command"] = command;
    if (!data_dir.empty()) kv["data"] = data_dir;
    if (!out_dir.empty()) kv["out"] = out_dir;
    if (!checkpoint.empty()) kv["checkpoint"] = checkpoint;
    return kv;
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("bad config line (expected key=value): " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::map<std::string, std::string> load_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_kv_text(buf.str());
}

void save_kv_file(const std::string& path, const std::map<std::string, std::string>& kv) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace mdn
