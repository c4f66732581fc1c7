#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mcsfqf/checkpoint.hpp"
#include "mcsfqf/cli.hpp"
#include "mcsfqf/config.hpp"

using namespace mcsfqf;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

RunConfig tiny_run() {
    RunConfig cfg;
    cfg.env = "gridworld";
    cfg.grid_w = 2;
    cfg.grid_h = 2;
    cfg.N = 2;
    cfg.M = 8;
    cfg.enc_hidden = 8;
    cfg.n_embed = 6;
    cfg.n_mcn = 6;
    cfg.n_hidden = 6;
    cfg.batch = 2;
    cfg.warmup = 4;
    cfg.steps = 12;
    cfg.horizon = 12;
    return cfg;
}

}  // namespace

TEST_CASE("default config equals the reference parameter table") {
    RunConfig cfg;
    CHECK(cfg.get("tau_L") == "2");
    CHECK(cfg.get("v_th") == "1");
    CHECK(cfg.get("v_reset") == "0");
    CHECK(cfg.get("T") == "8");
    CHECK(cfg.get("tau_A") == "2");
    CHECK(cfg.get("tau_B") == "2");
    CHECK(cfg.get("g_A") == "1");
    CHECK(cfg.get("g_B") == "1");
    CHECK(cfg.get("g_L") == "1");
    CHECK(cfg.get("N") == "32");
    CHECK(cfg.get("M") == "64");
    CHECK(cfg.get("C") == "0.05");
    CHECK(cfg.get("lr_adam") == "0.0001");
    CHECK(cfg.get("lr_rmsprop") == "2.5e-09");
    CHECK(cfg.n_mcn == 512);
    CHECK(cfg.n_hidden == 512);
}

TEST_CASE("unknown keys are rejected by name") {
    RunConfig cfg;
    try {
        cfg.set("taul", "3");
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("taul") != std::string::npos);
    }
}

TEST_CASE("config file parsing with comments and overrides") {
    const std::string path = temp_path("mcsfqf_cfg_test.cfg");
    {
        std::ofstream f(path, std::ios::trunc);
        f << "# comment line\n";
        f << "tau_L = 4.0   # trailing comment\n";
        f << "env=gridworld\n";
        f << "\n";
    }
    RunConfig cfg = RunConfig::from_file(path);
    CHECK(cfg.tau_L == 4.0);
    CHECK(cfg.env == "gridworld");
    cfg.apply_overrides({"tau_L=2.5", "N=8"});
    CHECK(cfg.tau_L == 2.5);
    CHECK(cfg.N == 8);
    CHECK_THROWS_AS(cfg.apply_overrides({"nonsense=1"}), std::invalid_argument);
    CHECK_THROWS_AS(cfg.apply_overrides({"tau_L"}), std::invalid_argument);
    std::remove(path.c_str());
}

TEST_CASE("missing config file raises an error naming the path") {
    try {
        RunConfig::from_file("/nonexistent/path.cfg");
        FAIL("expected error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("/nonexistent/path.cfg") != std::string::npos);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    RunConfig cfg = tiny_run();
    Trainer t(cfg.agent_config(), cfg.env_spec());
    for (int i = 0; i < 10; ++i) t.iterate();

    const std::string path = temp_path("mcsfqf_ck_test.ckpt");
    const Checkpoint ck = checkpoint_from_trainer(t, cfg);
    checkpoint_save(path, ck);
    const Checkpoint back = checkpoint_load(path);

    REQUIRE(back.tensors.size() == ck.tensors.size());
    // save(load(x)) reproduces the file byte for byte
    const std::string path2 = temp_path("mcsfqf_ck_test2.ckpt");
    checkpoint_save(path2, back);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)),
                              std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(b)),
                              std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
    CHECK(back.meta("step") == std::to_string(t.step_));

    // trainer reconstruction resumes with identical forward behavior
    RunConfig cfg2;
    Trainer t2 = trainer_from_checkpoint(back, cfg2);
    CHECK(cfg2.get("env") == cfg.get("env"));
    // stored weights are f32-rounded; reloading is stable
    const Vec q1 = t2.q_for(0);
    const Checkpoint ck2 = checkpoint_from_trainer(t2, cfg2);
    const std::string path3 = temp_path("mcsfqf_ck_test3.ckpt");
    checkpoint_save(path3, ck2);
    std::ifstream c(path3, std::ios::binary);
    const std::string bytes_c((std::istreambuf_iterator<char>(c)),
                              std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_c);
    std::remove(path.c_str());
    std::remove(path2.c_str());
    std::remove(path3.c_str());
    (void)q1;
}

TEST_CASE("checkpoint errors are structured") {
    const std::string path = temp_path("mcsfqf_ck_bad.ckpt");
    SUBCASE("bad magic") {
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        f << "NOTMAGIC" << std::string(64, '\0');
        f.close();
        try {
            checkpoint_load(path);
            FAIL("expected error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
        }
    }
    SUBCASE("truncation") {
        RunConfig cfg = tiny_run();
        Trainer t(cfg.agent_config(), cfg.env_spec());
        checkpoint_save(path, checkpoint_from_trainer(t, cfg));
        // chop the tail off
        std::ifstream in(path, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        out.close();
        try {
            checkpoint_load(path);
            FAIL("expected error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("truncated") != std::string::npos);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("tensor count and byte length are derivable from the header alone") {
    RunConfig cfg = tiny_run();
    Trainer t(cfg.agent_config(), cfg.env_spec());
    const std::string path = temp_path("mcsfqf_ck_header.ckpt");
    checkpoint_save(path, checkpoint_from_trainer(t, cfg));
    std::ifstream f(path, std::ios::binary);
    char magic[8];
    f.read(magic, 8);
    CHECK(std::string(magic, 8) == "MCSFQF01");
    unsigned char raw[12];
    f.read(reinterpret_cast<char*>(raw), 12);
    std::uint32_t n_tensors = 0;
    for (int i = 0; i < 4; ++i) n_tensors |= static_cast<std::uint32_t>(raw[i]) << (8 * i);
    std::uint64_t total = 0;
    for (int i = 0; i < 8; ++i) total |= static_cast<std::uint64_t>(raw[4 + i]) << (8 * i);
    CHECK(n_tensors > 0);
    CHECK(total == std::filesystem::file_size(path));
    std::remove(path.c_str());
}

TEST_CASE("cmd_train writes artifacts and steps=0 still produces a checkpoint") {
    RunConfig cfg = tiny_run();
    cfg.steps = 0;
    cfg.out = temp_path("mcsfqf_train_out");
    std::filesystem::remove_all(cfg.out);
    CHECK(cmd_train(cfg) == kExitOk);
    CHECK(std::filesystem::exists(cfg.out + "/checkpoint_initial.ckpt"));
    CHECK(std::filesystem::exists(cfg.out + "/checkpoint_final.ckpt"));
    // metrics has the header record only
    std::ifstream m(cfg.out + "/metrics.jsonl");
    std::string line, first;
    int lines = 0;
    while (std::getline(m, line)) {
        if (lines == 0) first = line;
        ++lines;
        CHECK(line.find("\"type\"") != std::string::npos);
    }
    CHECK(lines == 1);
    CHECK(first.find("\"tau_L\"") != std::string::npos);  // config echoed
    std::filesystem::remove_all(cfg.out);
}

TEST_CASE("cmd_eval is deterministic with zero spread on a deterministic env") {
    RunConfig cfg = tiny_run();
    cfg.steps = 6;
    cfg.out = temp_path("mcsfqf_eval_out");
    std::filesystem::remove_all(cfg.out);
    REQUIRE(cmd_train(cfg) == kExitOk);
    const Checkpoint ck = checkpoint_load(cfg.out + "/checkpoint_final.ckpt");
    RunConfig cfg2;
    Trainer t = trainer_from_checkpoint(ck, cfg2);
    const Vec r1 = t.evaluate(10, 3);
    const Vec r2 = t.evaluate(10, 3);
    CHECK(r1 == r2);
    double mean = 0.0;
    for (double r : r1) mean += r;
    mean /= r1.size();
    double var = 0.0;
    for (double r : r1) var += (r - mean) * (r - mean);
    CHECK(var == 0.0);  // gridworld is deterministic
    std::filesystem::remove_all(cfg.out);
}

TEST_CASE("cmd_inspect dumps the pinned CSV schema; zero weights give zero traces") {
    RunConfig cfg = tiny_run();
    cfg.steps = 0;
    cfg.out = temp_path("mcsfqf_inspect_out");
    std::filesystem::remove_all(cfg.out);
    REQUIRE(cmd_train(cfg) == kExitOk);

    // zero out every weight in the checkpoint to get all-zero traces
    Checkpoint ck = checkpoint_load(cfg.out + "/checkpoint_initial.ckpt");
    for (auto& [name, m] : ck.tensors) m.fill(0.0);
    const std::string zeroed = cfg.out + "/zeroed.ckpt";
    checkpoint_save(zeroed, ck);

    InspectOptions opt;
    opt.checkpoint_path = zeroed;
    opt.traces_path = cfg.out + "/traces.csv";
    opt.pop_raster_path = cfg.out + "/raster.csv";
    CHECK(cmd_inspect(opt) == kExitOk);

    std::ifstream f(opt.traces_path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "t,neuron,v_b,v_a,u,spike");
    std::string line;
    int rows = 0;
    while (std::getline(f, line)) {
        ++rows;
        // v_b, v_a, u, spike all zero
        CHECK(line.find(",0,0,0,0", line.find(',')) != std::string::npos);
    }
    CHECK(rows == cfg.T * cfg.n_mcn);  // fuse width below the 128 default
    CHECK(std::filesystem::exists(opt.pop_raster_path));
    std::filesystem::remove_all(cfg.out);
}

TEST_CASE("a truncated final metrics line leaves earlier records parseable") {
    RunConfig cfg = tiny_run();
    cfg.steps = 8;
    cfg.out = temp_path("mcsfqf_trunc_out");
    std::filesystem::remove_all(cfg.out);
    REQUIRE(cmd_train(cfg) == kExitOk);
    const std::string path = cfg.out + "/metrics.jsonl";
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    // chop the middle of the final record
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 25));
    out.close();
    std::ifstream re(path);
    std::string line;
    int complete = 0;
    while (std::getline(re, line)) {
        if (!line.empty() && line.front() == '{' && line.back() == '}') ++complete;
    }
    CHECK(complete == 8);  // header + 8 steps minus the mangled last line
    std::filesystem::remove_all(cfg.out);
}
