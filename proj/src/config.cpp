#include "mcsfqf/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mcsfqf {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config: bad numeric value for key '" + key + "': " + v);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw std::invalid_argument("config: bad unsigned value for key '" + key + "': " + v);
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw std::invalid_argument("config: bad integer value for key '" + key + "': " + v);
    return out;
}

// shortest representation that round-trips exactly
std::string fmt(double v) {
    for (int prec = 1; prec <= 17; ++prec) {
        std::ostringstream os;
        os.precision(prec);
        os << v;
        if (std::stod(os.str()) == v) return os.str();
    }
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define FIELD_D(name)                                                                       \
    {#name, Field{[](RunConfig& c, const std::string& v) { c.name = parse_double(#name, v); }, \
                  [](const RunConfig& c) { return fmt(c.name); }}}
#define FIELD_I(name)                                                                    \
    {#name, Field{[](RunConfig& c, const std::string& v) { c.name = parse_int(#name, v); }, \
                  [](const RunConfig& c) { return std::to_string(c.name); }}}
#define FIELD_U(name)                                                                    \
    {#name, Field{[](RunConfig& c, const std::string& v) { c.name = parse_u64(#name, v); }, \
                  [](const RunConfig& c) { return std::to_string(c.name); }}}
#define FIELD_S(name)                                                   \
    {#name, Field{[](RunConfig& c, const std::string& v) { c.name = v; }, \
                  [](const RunConfig& c) { return c.name; }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        FIELD_D(tau_L),       FIELD_D(tau_A),
        FIELD_D(tau_B),       FIELD_D(g_A),
        FIELD_D(g_B),         FIELD_D(g_L),
        FIELD_D(v_th),        FIELD_D(v_reset),
        FIELD_I(T),           FIELD_I(N),
        FIELD_I(M),           FIELD_D(C),
        FIELD_I(enc_hidden),  FIELD_I(n_embed),
        FIELD_I(n_mcn),       FIELD_I(n_hidden),
        FIELD_D(input_gain),  FIELD_D(pop_lif_gain),
        FIELD_S(mode),        FIELD_S(surrogate_center),
        FIELD_S(fraction_grad), FIELD_D(lr_adam),
        FIELD_D(lr_rmsprop),  FIELD_D(gamma),
        FIELD_D(huber_epsilon), FIELD_I(batch),
        FIELD_U(buffer_capacity), FIELD_I(warmup),
        FIELD_I(target_sync), FIELD_I(train_every),
        FIELD_D(eps_start),   FIELD_D(eps_end),
        FIELD_D(eps_anneal_frac), FIELD_S(env),
        FIELD_I(chain_k),     FIELD_D(chain_left_reward),
        FIELD_D(chain_right_reward_lo), FIELD_D(chain_right_reward_hi),
        FIELD_I(grid_w),      FIELD_I(grid_h),
        FIELD_I(horizon),     FIELD_I(image_size),
        FIELD_U(seed),        FIELD_U(steps),
        FIELD_S(out),         FIELD_U(checkpoint_interval),
        FIELD_S(verify_fault),
    };
    return table;
}

#undef FIELD_D
#undef FIELD_I
#undef FIELD_U
#undef FIELD_S

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    if (it == fields().end())
        throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second.set(*this, value);
}

std::string RunConfig::get(const std::string& key) const {
    const auto it = fields().find(key);
    if (it == fields().end())
        throw std::invalid_argument("config: unknown key '" + key + "'");
    return it->second.get(*this);
}

std::vector<std::pair<std::string, std::string>> RunConfig::to_pairs() const {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, f] : fields()) out.emplace_back(k, f.get(*this));
    return out;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open file: " + path);
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not key=value: " + line);
        cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

void RunConfig::apply_overrides(const std::vector<std::string>& key_eq_value) {
    for (const auto& kv : key_eq_value) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: override is not KEY=VALUE: " + kv);
        set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
}

EnvSpec RunConfig::env_spec() const {
    EnvSpec spec;
    if (env == "chain-mdp") {
        spec.kind = EnvSpec::Kind::ChainMdp;
    } else if (env == "gridworld") {
        spec.kind = EnvSpec::Kind::Gridworld;
    } else if (env == "synthetic-image") {
        spec.kind = EnvSpec::Kind::SyntheticImage;
    } else {
        throw std::invalid_argument("config: unknown env '" + env + "'");
    }
    spec.chain_k = chain_k;
    spec.left_rewards = {{chain_left_reward, 1.0}};
    spec.right_rewards = {{chain_right_reward_lo, 0.5}, {chain_right_reward_hi, 0.5}};
    spec.grid_w = grid_w;
    spec.grid_h = grid_h;
    spec.horizon = horizon;
    spec.image_size = image_size;
    spec.validate();
    return spec;
}

NetConfig RunConfig::net_config() const {
    const EnvSpec spec = env_spec();
    NetConfig net;
    if (spec.kind == EnvSpec::Kind::SyntheticImage) {
        net.encoder.kind = EncoderSpec::Kind::Conv;
        net.encoder.in_channels = 1;
        net.encoder.in_h = image_size;
        net.encoder.in_w = image_size;
    } else {
        net.encoder.kind = EncoderSpec::Kind::Dense;
        net.encoder.obs_dim = spec.obs_dim();
        net.encoder.hidden = enc_hidden;
        net.encoder.embed = n_embed;
    }
    net.n_fractions = N;
    net.pop_m = M;
    net.pop_sigma = C;
    net.n_mcn = n_mcn;
    net.n_hidden = n_hidden;
    net.n_actions = spec.n_actions();
    net.T = T;
    if (mode == "mcs-fqf") {
        net.fusion = FusionMode::McnPopulation;
    } else if (mode == "s-fqf-pop") {
        net.fusion = FusionMode::LiPopulation;
    } else if (mode == "s-fqf") {
        net.fusion = FusionMode::LiCosine;
    } else {
        throw std::invalid_argument("config: unknown mode '" + mode + "'");
    }
    net.neuron.tau_L = tau_L;
    net.neuron.tau_A = tau_A;
    net.neuron.tau_B = tau_B;
    net.neuron.g_A = g_A;
    net.neuron.g_B = g_B;
    net.neuron.g_L = g_L;
    net.neuron.v_th = v_th;
    net.neuron.v_reset = v_reset;
    if (surrogate_center == "threshold") {
        net.surrogate_center = SurrogateCenter::Threshold;
    } else if (surrogate_center == "zero") {
        net.surrogate_center = SurrogateCenter::Zero;
    } else {
        throw std::invalid_argument("config: surrogate_center must be threshold or zero");
    }
    net.input_gain = input_gain;
    net.pop_lif_gain = pop_lif_gain;
    net.pop_seed = seed;
    net.validate();
    return net;
}

AgentConfig RunConfig::agent_config() const {
    AgentConfig a;
    a.net = net_config();
    a.loss.epsilon = huber_epsilon;
    a.loss.gamma = gamma;
    a.lr_adam = lr_adam;
    a.lr_rmsprop = lr_rmsprop;
    if (fraction_grad == "paper") {
        a.fraction_grad = FractionGradMode::Paper;
    } else if (fraction_grad == "softmax-chain") {
        a.fraction_grad = FractionGradMode::SoftmaxChain;
    } else {
        throw std::invalid_argument("config: fraction_grad must be paper or softmax-chain");
    }
    a.batch = batch;
    a.warmup = warmup;
    a.buffer_capacity = buffer_capacity;
    a.target_sync = target_sync;
    a.train_every = train_every;
    a.eps_start = eps_start;
    a.eps_end = eps_end;
    a.eps_anneal_frac = eps_anneal_frac;
    a.seed = seed;
    a.max_steps = steps;
    return a;
}

void RunConfig::validate() const {
    env_spec();
    net_config();
    agent_config();
    require(batch >= 1 && warmup >= 0 && target_sync >= 1 && train_every >= 1,
            "config: bad training cadence");
    require(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= 1.0,
            "config: epsilon schedule outside [0, 1]");
}

}  // namespace mcsfqf
