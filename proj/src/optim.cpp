#include "mdn/optim.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

namespace mdn {

AdamOptimizer::AdamOptimizer(std::vector<Parameter> params, double lr, double beta1, double beta2,
                             double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (lr <= 0) throw ConfigError("adam learning rate must be positive, got " + std::to_string(lr));
    std::unordered_set<std::string> seen;
    for (const auto& p : params_) {
        if (!seen.insert(p.name).second)
            throw ContractError("duplicate parameter name: " + p.name);
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamOptimizer::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void AdamOptimizer::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        auto& w = params_[pi].tensor.data();
        const auto& g = params_[pi].tensor.grad();
        auto& m = m_[pi];
        auto& v = v_[pi];
        const size_t n = w.size();
        for (size_t i = 0; i < n; ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mh = m[i] / bc1;
            const double vh = v[i] / bc2;
            w[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
}

namespace {

template <typename T>
void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw IoError("checkpoint truncated");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<Parameter>& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write("MDN1", 4);
    write_pod<uint64_t>(out, params.size());
    for (const auto& p : params) {
        write_pod<uint32_t>(out, static_cast<uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        const auto& shape = p.tensor.shape();
        write_pod<uint32_t>(out, static_cast<uint32_t>(shape.size()));
        for (int e : shape) write_pod<uint64_t>(out, static_cast<uint64_t>(e));
        const auto& d = p.tensor.data();
        out.write(reinterpret_cast<const char*>(d.data()),
                  static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    if (!out) throw IoError("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, std::vector<Parameter>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "MDN1", 4) != 0)
        throw IoError("bad checkpoint magic in " + path);
    const uint64_t count = read_pod<uint64_t>(in);

    std::unordered_map<std::string, Parameter*> by_name;
    for (auto& p : params) by_name[p.name] = &p;

    for (uint64_t i = 0; i < count; ++i) {
        const uint32_t name_len = read_pod<uint32_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const uint32_t rank = read_pod<uint32_t>(in);
        std::vector<int> shape(rank);
        size_t numel = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            shape[r] = static_cast<int>(read_pod<uint64_t>(in));
            numel *= static_cast<size_t>(shape[r]);
        }
        std::vector<double> values(numel);
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(numel * sizeof(double)));
        if (!in) throw IoError("checkpoint truncated: " + path);

        auto it = by_name.find(name);
        if (it == by_name.end()) throw ContractError("checkpoint has unknown parameter: " + name);
        Parameter* p = it->second;
        if (p->tensor.shape() != shape)
            throw ContractError("checkpoint shape mismatch for " + name + ": file " +
                                shape_str(shape) + " vs model " + shape_str(p->tensor.shape()));
        p->tensor.data() = std::move(values);
    }
}

}  // namespace mdn
