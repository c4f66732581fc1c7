#include "mcsfqf/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <limits>

namespace mcsfqf {

namespace {

constexpr char kMagic[8] = {'M', 'C', 'S', 'F', 'Q', 'F', '0', '1'};
constexpr std::size_t kMaxElements = 1u << 30;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(std::uint32_t len) {
        need(len);
        std::string s = buf.substr(pos, len);
        pos += len;
        return s;
    }
};

}  // namespace

const Mat* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, m] : tensors)
        if (n == name) return &m;
    return nullptr;
}

std::string Checkpoint::meta(const std::string& key) const {
    for (const auto& [k, v] : kv)
        if (k == key) return v;
    throw std::runtime_error("checkpoint: missing metadata key '" + key + "'");
}

bool Checkpoint::has_meta(const std::string& key) const {
    for (const auto& [k, v] : kv)
        if (k == key) return true;
    return false;
}

void checkpoint_save(const std::string& path, const Checkpoint& ck) {
    std::string out;
    out.append(kMagic, 8);
    put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
    const std::size_t total_pos = out.size();
    put_u64(out, 0);  // patched below
    for (const auto& [name, m] : ck.tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.append(name);
        put_u32(out, 2);
        put_u32(out, static_cast<std::uint32_t>(m.rows));
        put_u32(out, static_cast<std::uint32_t>(m.cols));
        for (double v : m.a) put_f32(out, static_cast<float>(v));
    }
    put_u32(out, static_cast<std::uint32_t>(ck.kv.size()));
    for (const auto& [k, v] : ck.kv) {
        put_u32(out, static_cast<std::uint32_t>(k.size()));
        out.append(k);
        put_u32(out, static_cast<std::uint32_t>(v.size()));
        out.append(v);
    }
    const std::uint64_t total = out.size();
    for (int i = 0; i < 8; ++i) out[total_pos + i] = static_cast<char>((total >> (8 * i)) & 0xFF);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint checkpoint_load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};
    r.need(8);
    if (std::memcmp(buf.data(), kMagic, 8) != 0)
        throw std::runtime_error("checkpoint: bad magic");
    r.pos = 8;
    const std::uint32_t n_tensors = r.u32();
    const std::uint64_t total = r.u64();
    if (total != buf.size()) throw std::runtime_error("checkpoint: truncated file");

    Checkpoint ck;
    for (std::uint32_t t = 0; t < n_tensors; ++t) {
        const std::string name = r.str(r.u32());
        const std::uint32_t rank = r.u32();
        if (rank != 2) throw std::runtime_error("checkpoint: unsupported tensor rank");
        const std::uint64_t rows = r.u32();
        const std::uint64_t cols = r.u32();
        if (rows * cols > kMaxElements) throw std::runtime_error("checkpoint: dim overflow");
        Mat m(rows, cols);
        for (std::size_t i = 0; i < m.a.size(); ++i) m.a[i] = static_cast<double>(r.f32());
        ck.tensors.emplace_back(name, std::move(m));
    }
    const std::uint32_t n_kv = r.u32();
    for (std::uint32_t i = 0; i < n_kv; ++i) {
        const std::string k = r.str(r.u32());
        const std::string v = r.str(r.u32());
        ck.kv.emplace_back(k, v);
    }
    return ck;
}

Checkpoint checkpoint_from_trainer(const Trainer& t, const RunConfig& cfg) {
    Checkpoint ck;
    t.params_.visit([&](const std::string& name, const Mat& m) {
        ck.tensors.emplace_back(name, m);
    });
    t.target_.visit([&](const std::string& name, const Mat& m) {
        ck.tensors.emplace_back("target/" + name, m);
    });
    t.adam_.m.visit([&](const std::string& name, const Mat& m) {
        ck.tensors.emplace_back("adam_m/" + name, m);
    });
    t.adam_.v.visit([&](const std::string& name, const Mat& m) {
        ck.tensors.emplace_back("adam_v/" + name, m);
    });
    ck.tensors.emplace_back("rms/w_f", t.rms_.acc);

    for (const auto& [k, v] : cfg.to_pairs()) ck.kv.emplace_back("cfg/" + k, v);
    ck.kv.emplace_back("step", std::to_string(t.step_));
    ck.kv.emplace_back("episode", std::to_string(t.episode_));
    ck.kv.emplace_back("grad_steps", std::to_string(t.grad_steps_));
    ck.kv.emplace_back("adam_step", std::to_string(t.adam_.step));
    ck.kv.emplace_back("env_state", std::to_string(t.env_.state));
    ck.kv.emplace_back("env_steps", std::to_string(t.env_.steps));
    ck.kv.emplace_back("env_draws", std::to_string(t.env_.rewards.counter));
    ck.kv.emplace_back("explore_draws", std::to_string(t.explore_.counter));
    ck.kv.emplace_back("replay_draws", std::to_string(t.replay_rng_.counter));
    ck.kv.emplace_back("replay_pushes", std::to_string(t.replay_.pushes()));
    return ck;
}

Trainer trainer_from_checkpoint(const Checkpoint& ck, RunConfig& cfg_out) {
    RunConfig cfg;
    for (const auto& [k, v] : ck.kv)
        if (k.rfind("cfg/", 0) == 0) cfg.set(k.substr(4), v);
    cfg_out = cfg;

    Trainer t(cfg.agent_config(), cfg.env_spec());
    auto load_into = [&](const std::string& prefix, NetworkParams& params) {
        params.visit([&](const std::string& name, Mat& m) {
            const Mat* src = ck.find(prefix + name);
            if (!src) throw std::runtime_error("checkpoint: missing tensor " + prefix + name);
            if (!m.same_shape(*src))
                throw std::runtime_error("checkpoint: shape mismatch for " + prefix + name);
            m = *src;
        });
    };
    load_into("", t.params_);
    load_into("target/", t.target_);
    load_into("adam_m/", t.adam_.m);
    load_into("adam_v/", t.adam_.v);
    if (const Mat* acc = ck.find("rms/w_f")) t.rms_.acc = *acc;

    t.step_ = std::stoull(ck.meta("step"));
    t.episode_ = std::stoull(ck.meta("episode"));
    t.grad_steps_ = std::stoull(ck.meta("grad_steps"));
    t.adam_.step = std::stoull(ck.meta("adam_step"));
    t.env_.state = std::stoi(ck.meta("env_state"));
    t.env_.steps = std::stoi(ck.meta("env_steps"));
    t.env_.rewards.counter = std::stoull(ck.meta("env_draws"));
    t.explore_.counter = std::stoull(ck.meta("explore_draws"));
    t.replay_rng_.counter = std::stoull(ck.meta("replay_draws"));
    t.replay_.set_pushes(std::stoull(ck.meta("replay_pushes")));
    return t;
}

}  // namespace mcsfqf
