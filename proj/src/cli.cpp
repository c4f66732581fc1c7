#include "mcsfqf/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "mcsfqf/checkpoint.hpp"
#include "mcsfqf/verify.hpp"

namespace mcsfqf {

namespace {

using nlohmann::json;

json header_record(const RunConfig& cfg) {
    json config;
    for (const auto& [k, v] : cfg.to_pairs()) config[k] = v;
    return json{{"type", "header"}, {"config", config}};
}

json metrics_record(const MetricsRecord& m) {
    return json{{"type", "metrics"},
                {"step", m.step},
                {"episode", m.episode},
                {"episode_end", m.episode_end},
                {"return", m.episode_return},
                {"loss_huber", m.loss_huber},
                {"loss_wasserstein", m.loss_wasserstein},
                {"epsilon", m.epsilon},
                {"fraction_entropy", m.fraction_entropy}};
}

}  // namespace

int cmd_train(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out);
    const std::string metrics_path = cfg.out + "/metrics.jsonl";
    std::ofstream metrics(metrics_path, std::ios::trunc);
    if (!metrics) {
        std::cerr << "error: cannot open metrics stream: " << metrics_path << "\n";
        return kExitUsage;
    }
    metrics << header_record(cfg).dump() << "\n";
    metrics.flush();

    Trainer trainer(cfg.agent_config(), cfg.env_spec());
    {
        const Checkpoint ck = checkpoint_from_trainer(trainer, cfg);
        checkpoint_save(cfg.out + "/checkpoint_initial.ckpt", ck);
    }
    try {
        for (std::uint64_t s = 0; s < cfg.steps; ++s) {
            const MetricsRecord rec = trainer.iterate();
            metrics << metrics_record(rec).dump() << "\n";
            if (cfg.checkpoint_interval > 0 && rec.step % cfg.checkpoint_interval == 0) {
                const Checkpoint ck = checkpoint_from_trainer(trainer, cfg);
                checkpoint_save(cfg.out + "/checkpoint_" + std::to_string(rec.step) + ".ckpt", ck);
            }
        }
    } catch (const DivergenceError& e) {
        metrics.flush();
        std::cerr << "error: " << e.what() << "\n";
        return kExitDiverged;
    }
    const Checkpoint ck = checkpoint_from_trainer(trainer, cfg);
    checkpoint_save(cfg.out + "/checkpoint_final.ckpt", ck);
    metrics.flush();
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, int episodes, std::uint64_t seed) {
    const Checkpoint ck = checkpoint_load(checkpoint_path);
    RunConfig cfg;
    Trainer trainer = trainer_from_checkpoint(ck, cfg);
    const Vec returns = trainer.evaluate(episodes, seed);
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= returns.empty() ? 1.0 : static_cast<double>(returns.size());
    double var = 0.0;
    for (double r : returns) var += (r - mean) * (r - mean);
    const double std_dev = returns.size() > 1 ? std::sqrt(var / returns.size()) : 0.0;
    const double std_pct = mean != 0.0 ? 100.0 * std_dev / std::abs(mean) : 0.0;

    json summary{{"score", mean}, {"std", std_dev}, {"std_pct", std_pct},
                 {"episodes", episodes}};
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_verify(const RunConfig& cfg) {
    const auto results = run_verification_suite(cfg.verify_fault);
    std::filesystem::create_directories(cfg.out);
    std::ofstream report(cfg.out + "/verify_report.jsonl", std::ios::trunc);
    bool ok = true;
    for (const auto& r : results) {
        json rec{{"check", r.name},
                 {"pass", r.pass},
                 {"value", r.value},
                 {"threshold", r.threshold},
                 {"detail", r.detail}};
        report << rec.dump() << "\n";
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " value=" << r.value
                  << " threshold=" << r.threshold << "\n";
        ok = ok && r.pass;
    }
    return ok ? kExitOk : kExitCheckFailed;
}

int cmd_inspect(const InspectOptions& opt) {
    const Checkpoint ck = checkpoint_load(opt.checkpoint_path);
    RunConfig cfg;
    Trainer trainer = trainer_from_checkpoint(ck, cfg);
    const EnvSpec spec = cfg.env_spec();
    const Vec obs = observe(spec, spec.start_state());
    const TapeRecord tape = full_forward(obs, trainer.params_, trainer.cfg_.net);

    const int n_mcn = trainer.cfg_.net.fuse_width();
    const int n_dump = std::min(opt.neurons, n_mcn);
    std::vector<int> picks(n_mcn);
    for (int i = 0; i < n_mcn; ++i) picks[i] = i;
    // seeded random subset when the layer is larger than the dump budget
    for (int i = 0; i < n_dump; ++i) {
        const int j =
            i + static_cast<int>(hash4(cfg.seed, rng_tag::kTest, i, 7) % (n_mcn - i));
        std::swap(picks[i], picks[j]);
    }
    picks.resize(n_dump);
    std::sort(picks.begin(), picks.end());

    if (opt.fraction < 0 || opt.fraction >= trainer.cfg_.net.n_fractions)
        throw std::invalid_argument("inspect: fraction index out of range");
    const FractionTape& f = tape.frac[opt.fraction];
    const bool mcn = trainer.cfg_.net.fusion == FusionMode::McnPopulation;

    std::ofstream out(opt.traces_path, std::ios::trunc);
    if (!out) throw std::runtime_error("inspect: cannot open " + opt.traces_path);
    out << "t,neuron,v_b,v_a,u,spike\n";
    for (int t = 0; t < trainer.cfg_.net.T; ++t) {
        for (int n : picks) {
            const double u = mcn ? f.soma.u_pre(t, n) : f.fused(t, n);
            const double spike = mcn ? f.soma.out(t, n) : 0.0;
            out << t << "," << n << "," << tape.v_b(t, n) << "," << f.v_a(t, n) << "," << u
                << "," << spike << "\n";
        }
    }

    if (!opt.pop_raster_path.empty() && f.pop.steps > 0) {
        std::ofstream raster(opt.pop_raster_path, std::ios::trunc);
        if (!raster) throw std::runtime_error("inspect: cannot open " + opt.pop_raster_path);
        raster << "t,neuron,spike\n";
        for (std::size_t t = 0; t < f.pop.steps; ++t)
            for (std::size_t j = 0; j < f.pop.neurons; ++j)
                raster << t << "," << j << "," << f.pop.at(t, j) << "\n";
    }
    return kExitOk;
}

}  // namespace mcsfqf
