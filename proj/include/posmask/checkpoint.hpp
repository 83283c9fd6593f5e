#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "posmask/model.hpp"
#include "posmask/rng.hpp"

namespace posmask {

// Self-describing binary checkpoint: magic, version, config, all named
// parameter arrays with shapes, RNG state, and the optimizer step counter.
// Doubles are written raw, so a round trip is bit exact.
struct Checkpoint {
    Model model;
    std::uint64_t rng_state[4] = {};
    long long step = 0;
};

namespace ckpt_detail {

constexpr char MAGIC[8] = {'P', 'M', 'C', 'K', 'P', 'T', '0', '1'};

inline void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}
inline void write_str(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& in) {
    std::string s(read_u64(in), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}

inline std::string config_to_text(const ModelConfig& c) {
    std::ostringstream os;
    os << "vocab_size=" << c.vocab_size << "\nhidden=" << c.hidden << "\nlayers=" << c.layers
       << "\nheads=" << c.heads << "\nmax_seq_len=" << c.max_seq_len
       << "\ngrid_max=" << c.grid_max << "\nuse_height_width=" << (c.use_height_width ? 1 : 0)
       << "\npm_variant=" << c.pm_variant.name()
       << "\npm_loss=" << (c.pm_loss == PmLoss::Classification ? "ce" : "reg")
       << "\nlambda=" << std::hexfloat << c.lambda << "\ndropout=" << c.dropout
       << "\nsmooth_l1_beta=" << c.smooth_l1_beta << std::defaultfloat
       << "\ntie_mlm_weights=" << (c.tie_mlm_weights ? 1 : 0)
       << "\nnum_labels=" << c.num_labels << "\n";
    return os.str();
}

inline ModelConfig config_from_text(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "vocab_size") c.vocab_size = std::stoi(val);
        else if (key == "hidden") c.hidden = std::stoi(val);
        else if (key == "layers") c.layers = std::stoi(val);
        else if (key == "heads") c.heads = std::stoi(val);
        else if (key == "max_seq_len") c.max_seq_len = std::stoi(val);
        else if (key == "grid_max") c.grid_max = std::stoi(val);
        else if (key == "use_height_width") c.use_height_width = val == "1";
        else if (key == "pm_variant") c.pm_variant = MaskVariant::parse(val);
        else if (key == "pm_loss") c.pm_loss = parse_pm_loss(val);
        else if (key == "lambda") c.lambda = std::strtod(val.c_str(), nullptr);
        else if (key == "dropout") c.dropout = std::strtod(val.c_str(), nullptr);
        else if (key == "smooth_l1_beta") c.smooth_l1_beta = std::strtod(val.c_str(), nullptr);
        else if (key == "tie_mlm_weights") c.tie_mlm_weights = val == "1";
        else if (key == "num_labels") c.num_labels = std::stoi(val);
        else throw std::runtime_error("checkpoint: unknown config key '" + key + "'");
    }
    return c;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    using namespace ckpt_detail;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write(MAGIC, sizeof MAGIC);
    write_str(out, config_to_text(ck.model.cfg));
    write_u64(out, ck.model.params.size());
    for (std::size_t i = 0; i < ck.model.params.size(); ++i) {
        write_str(out, ck.model.params.names[i]);
        const Array& a = ck.model.params.values[i];
        write_u64(out, a.shape.size());
        for (auto d : a.shape) write_u64(out, d);
        out.write(reinterpret_cast<const char*>(a.data.data()),
                  static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    }
    for (auto w : ck.rng_state) write_u64(out, w);
    write_u64(out, static_cast<std::uint64_t>(ck.step));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    using namespace ckpt_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (std::memcmp(magic, MAGIC, sizeof magic) != 0)
        throw std::runtime_error("not a checkpoint file (bad magic): " + path);
    Checkpoint ck;
    ck.model.cfg = config_from_text(read_str(in));
    std::uint64_t nparams = read_u64(in);
    for (std::uint64_t i = 0; i < nparams; ++i) {
        std::string name = read_str(in);
        std::uint64_t ndim = read_u64(in);
        std::vector<std::size_t> shape;
        for (std::uint64_t d = 0; d < ndim; ++d) shape.push_back(read_u64(in));
        Array a(shape);
        in.read(reinterpret_cast<char*>(a.data.data()),
                static_cast<std::streamsize>(a.data.size() * sizeof(double)));
        ck.model.params.add(name, std::move(a));
    }
    for (auto& w : ck.rng_state) w = read_u64(in);
    ck.step = static_cast<long long>(read_u64(in));
    if (!in) throw std::runtime_error("truncated checkpoint " + path);
    return ck;
}

}  // namespace posmask
