#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "agentpomdp/model_io.hpp"
#include "commands.hpp"

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "agentpomdp");
    std::ostringstream out, err;
    const int code = agentpomdp::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string fixture(const std::string& name) { return std::string(AGENTPOMDP_FIXTURE_DIR) + "/" + name; }

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& f) const { return (path / f).string(); }
};

double value_after(const std::string& text, const std::string& key) {
    const auto pos = text.find(key);
    REQUIRE(pos != std::string::npos);
    return std::stod(text.substr(pos + key.size()));
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("evaluate a deterministic and a stochastic rule") {
        TempDir dir("agentpomdp_cli_eval");
        Result r = run({"evaluate", "--model", fixture("blind.pomdpz"), "--probs", "0,1", "--out", dir.path.string()});
        CHECK(r.code == 0);
        CHECK(value_after(r.out, "J = ") == doctest::Approx(-5.0).epsilon(1e-9));
        CHECK(std::filesystem::exists(dir.file("eval.csv")));

        Result s = run({"evaluate", "--model", fixture("blind.pomdpz"), "--probs", "0.61,0.39", "--out", dir.path.string()});
        Result sweep = run({"reproduce", "blind-sweep", "--out", dir.path.string()});
        CHECK(s.code == 0);
        const std::string csv = agentpomdp::read_text_file(dir.file("sweep.csv"));
        std::istringstream rows(csv);
        std::string row;
        double j39 = 0.0;
        while (std::getline(rows, row))
            if (row.find(',') != std::string::npos && row[0] != 'p' && std::abs(std::stod(row) - 0.39) < 1e-12)
                j39 = std::stod(row.substr(row.find(',') + 1));
        CHECK(j39 != 0.0);
        CHECK(value_after(s.out, "J = ") == doctest::Approx(j39).epsilon(1e-9));
    }

    TEST_CASE("exit codes") {
        Result missing = run({"evaluate", "--model", "/no/such/model.pomdpz", "--rule", "0"});
        CHECK(missing.code == 2);
        CHECK(missing.err.find("/no/such/model.pomdpz") != std::string::npos);
        CHECK(run({"evaluate", "--model", fixture("blind.pomdpz"), "--rule", "7"}).code == 2);
        CHECK(run({"frobnicate"}).code == 2);
        CHECK(run({"--help"}).code == 0);
        TempDir dir("agentpomdp_cli_caps");
        setenv("AGENTPOMDP_CAP", "2", 1);
        Result cap = run({"plan", "--model", fixture("mdp.pomdpz"), "--out", dir.path.string()});
        unsetenv("AGENTPOMDP_CAP");
        CHECK(cap.code == 3);
    }

    TEST_CASE("reproduce targets") {
        TempDir dir("agentpomdp_cli_repro");
        Result sweep = run({"reproduce", "blind-sweep", "--out", dir.path.string()});
        CHECK(sweep.code == 0);
        const double p = value_after(sweep.out, "argmax p = ");
        CHECK(p >= 0.385);
        CHECK(p <= 0.395);

        Result chain = run({"reproduce", "counting-chain", "--out", dir.path.string()});
        CHECK(chain.code == 0);
        CHECK(value_after(chain.out, "J_ZSD = ") == doctest::Approx(4.0221402214).epsilon(1e-9));
        CHECK(value_after(chain.out, "strict gap J_ZND - J_ZSD >= ") > 5.9);

        Result ord = run({"reproduce", "ordering", "--out", dir.path.string()});
        CHECK(ord.code == 0);
        CHECK(ord.out.find("violations = 0") != std::string::npos);
    }

    TEST_CASE("outputs are byte-identical across runs") {
        TempDir a("agentpomdp_cli_det_a"), b("agentpomdp_cli_det_b");
        for (const auto* d : {&a, &b})
            CHECK(run({"reproduce", "asql-demo", "--steps", "20000", "--seed", "4", "--out", d->path.string()}).code == 0);
        CHECK(agentpomdp::read_text_file(a.file("asql_snapshots.csv")) ==
              agentpomdp::read_text_file(b.file("asql_snapshots.csv")));
        CHECK(agentpomdp::read_text_file(a.file("asql_distance.csv")) ==
              agentpomdp::read_text_file(b.file("asql_distance.csv")));
    }

    TEST_CASE("AIS audit") {
        TempDir dir("agentpomdp_cli_audit");
        Result mdp = run({"ais-audit", "--model", fixture("mdp.pomdpz"), "--out", dir.path.string()});
        CHECK(mdp.code == 0);
        CHECK(value_after(mdp.out, "bound = ") == doctest::Approx(0.0));
        CHECK(value_after(mdp.out, "measured suboptimality <= ") == doctest::Approx(0.0).epsilon(1e-9));

        Result blind = run({"ais-audit", "--model", fixture("blind.pomdpz"), "--tol", "1e-4", "--out", dir.path.string()});
        CHECK(blind.code == 0);
        CHECK(blind.out.find("bound holds") != std::string::npos);
    }

    TEST_CASE("plan then evaluate the written policy") {
        TempDir dir("agentpomdp_cli_plan");
        Result plan = run({"plan", "--model", fixture("blind.pomdpz"), "--out", dir.path.string()});
        CHECK(plan.code == 0);
        Result ev = run({"evaluate", "--model", fixture("blind.pomdpz"), "--policy", dir.file("plan.policy")});
        CHECK(ev.code == 0);
        CHECK(value_after(ev.out, "J = ") == doctest::Approx(0.638359375).epsilon(1e-6));
    }

    TEST_CASE("shipped fixtures match the exporter") {
        TempDir dir("agentpomdp_cli_export");
        std::filesystem::create_directories(dir.path);
        for (const std::string name : {"blind", "counting-chain", "mdp"}) {
            CHECK(run({"export", name, "--out", dir.file(name + ".pomdpz")}).code == 0);
            CHECK(agentpomdp::read_text_file(dir.file(name + ".pomdpz")) ==
                  agentpomdp::read_text_file(fixture(name + ".pomdpz")));
        }
    }
}
