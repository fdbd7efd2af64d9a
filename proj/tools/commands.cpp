#include "commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <future>
#include <optional>
#include <sstream>

#include "agentpomdp/ais.hpp"
#include "agentpomdp/benchmarks.hpp"
#include "agentpomdp/bruteforce.hpp"
#include "agentpomdp/designer.hpp"
#include "agentpomdp/errors.hpp"
#include "agentpomdp/exact_eval.hpp"
#include "agentpomdp/learning.hpp"
#include "agentpomdp/model_io.hpp"
#include "agentpomdp/policy_search.hpp"

namespace agentpomdp::cli {
namespace {

std::string num(double v, int digits = 10) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string exact(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct RunConfig {
    std::string model_path;
    std::string machine;
    std::optional<double> gamma;
    double tol = 1e-6;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

void add_common(CLI::App* cmd, RunConfig& cfg, bool model_required) {
    auto* m = cmd->add_option("--model", cfg.model_path, "model file (.pomdpz native or .pomdp classic)");
    if (model_required) m->required();
    cmd->add_option("--machine", cfg.machine,
                    "machine name from the model file, or identity | singleton | window:N | belief:K");
    cmd->add_option("--gamma", cfg.gamma, "override the discount factor")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--tol", cfg.tol, "tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", cfg.seed, "random seed");
    cmd->add_option("--out", cfg.out_dir, "output directory");
}

PomdpModel with_gamma(const PomdpModel& model, std::optional<double> gamma) {
    if (!gamma) return model;
    ModelData d = model.data();
    d.gamma = *gamma;
    return PomdpModel(std::move(d));
}

struct Loaded {
    ModelDocument doc;
    PomdpModel model;
};

Loaded load(const RunConfig& cfg) {
    ModelDocument doc = load_model_file(cfg.model_path);
    PomdpModel model = with_gamma(doc.model, cfg.gamma);
    return {std::move(doc), std::move(model)};
}

Index parse_count(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        const unsigned long v = std::stoul(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError("invalid " + what + " '" + text + "'");
}

AgentStateMachine resolve_machine(const ModelDocument& doc, const PomdpModel& model, const std::string& name,
                                  const Caps& caps) {
    if (name.empty()) {
        if (!doc.machines.empty()) return doc.machines.front();
        return identity_machine(model.n_obs(), model.n_actions()).with_label("identity");
    }
    for (const auto& m : doc.machines)
        if (m.label() == name) return m;
    if (name == "identity") return identity_machine(model.n_obs(), model.n_actions()).with_label(name);
    if (name == "singleton") return singleton_machine(model.n_obs(), model.n_actions()).with_label(name);
    if (name.rfind("window:", 0) == 0)
        return window_machine(parse_count(name.substr(7), "window length"), model.n_obs(), model.n_actions(),
                              caps.agent_states)
            .with_label(name);
    if (name.rfind("belief:", 0) == 0)
        return belief_machine(model, parse_count(name.substr(7), "lattice resolution"), caps.agent_states)
            .with_label(name);
    throw ValidationError("unknown machine '" + name + "'");
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            values.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("invalid number '" + item + "' in list '" + text + "'");
        }
    }
    return values;
}

void write_output(const RunConfig& cfg, const std::string& name, const std::string& text, std::ostream& out) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::string path = (std::filesystem::path(cfg.out_dir) / name).string();
    write_text_file_atomic(path, text);
    out << "wrote " << path << '\n';
}

template <class F>
std::string to_string_with(F&& f) {
    std::ostringstream s;
    f(s);
    return s.str();
}

// ----------------------------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string rule;
    std::string probs;
    std::string policy;
};

int cmd_evaluate(const RunConfig& cfg, const EvaluateArgs& args, std::ostream& out) {
    const Caps caps = Caps::from_env();
    const auto [doc, model] = load(cfg);
    const AgentStateMachine machine = resolve_machine(doc, model, cfg.machine, caps);
    const Index Z = machine.n_agent_states(), A = model.n_actions();
    const int given = !args.rule.empty() + !args.probs.empty() + !args.policy.empty();
    if (given != 1) throw ValidationError("give exactly one of --rule, --probs or --policy");

    if (!args.policy.empty()) {
        const ParsedPolicy parsed = parse_policy(read_text_file(args.policy));
        if (!parsed.machine.empty() && parsed.machine != machine.label())
            throw ValidationError("policy was written for machine '" + parsed.machine + "', not '" +
                                  machine.label() + "'");
        if (parsed.policy.n_agent_states() != Z || parsed.policy.n_actions() != A)
            throw ValidationError("policy dimensions do not match the model and machine");
        if (!parsed.policy.is_stationary()) {
            const PerformanceResult r = performance(model, machine, parsed.policy);
            out << "J = " << num(r.value) << " +- " << num(r.radius, 12) << '\n';
            return kOk;
        }
        const EvalBundle bundle = policy_evaluate(model, machine, parsed.policy.tail());
        out << "J = " << num(bundle.performance) << '\n';
        write_output(cfg, "eval.csv", to_string_with([&](std::ostream& s) { write_eval_csv(s, bundle); }), out);
        return kOk;
    }

    std::optional<DecisionRule> rule;
    if (!args.rule.empty()) {
        std::vector<Index> actions;
        for (double v : parse_list(args.rule)) {
            if (v < 0.0 || v != static_cast<double>(static_cast<Index>(v)) || v >= static_cast<double>(A))
                throw ValidationError("rule entries must be action indices below " + std::to_string(A));
            actions.push_back(static_cast<Index>(v));
        }
        if (actions.size() != Z)
            throw ValidationError("rule needs " + std::to_string(Z) + " entries, got " + std::to_string(actions.size()));
        rule = DecisionRule::deterministic(std::move(actions), A);
    } else {
        std::vector<double> probs = parse_list(args.probs);
        if (probs.size() != Z * A)
            throw ValidationError("--probs needs |Z| * |A| = " + std::to_string(Z * A) + " entries");
        try {
            rule = DecisionRule::stochastic(std::move(probs), Z, A);
        } catch (const ContractError& e) {
            throw ValidationError(e.what());
        }
    }
    const EvalBundle bundle = policy_evaluate(model, machine, *rule);
    out << "J = " << num(bundle.performance) << '\n';
    write_output(cfg, "eval.csv", to_string_with([&](std::ostream& s) { write_eval_csv(s, bundle); }), out);
    return kOk;
}

// ---------------------------------------------------------------------------------- reproduce

int reproduce_blind_sweep(const RunConfig& cfg, std::ostream& out) {
    const PomdpModel model = benchmarks::blind_randomization_model(cfg.gamma.value_or(0.9));
    const auto curve = sweep_1param(model, unit_grid(200));
    std::size_t best = 0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        if (curve[i].value > curve[best].value) best = i;
    out << "J(p=0) = " << num(curve.front().value) << '\n';
    out << "J(p=1) = " << num(curve.back().value) << '\n';
    out << "argmax p = " << num(curve[best].p, 3) << ", J = " << num(curve[best].value) << '\n';
    write_output(cfg, "sweep.csv", to_string_with([&](std::ostream& s) { write_sweep_csv(s, curve); }), out);
    return kOk;
}

int reproduce_counting_chain(const RunConfig& cfg, std::ostream& out) {
    const Caps caps = Caps::from_env();
    const double g = cfg.gamma.value_or(0.9);
    const PomdpModel model = benchmarks::counting_chain_model(g);
    const AgentStateMachine machine = identity_machine(2, 2).with_label("identity");
    const StationaryDetResult zsd = enumerate_stationary_det(model, machine, caps.stationary_rules);
    DesignerOptions opts;
    opts.tol = cfg.tol;
    opts.caps = caps;
    const MetaPlan plan = plan_designer(model, machine, opts);
    const HistoryDpResult hnd = history_dp(model, 400, cfg.tol, caps.belief_nodes);
    out << "states = " << model.n_states() << '\n';
    out << "J_ZSD = " << num(zsd.value) << "  (closed form " << num((1 + g - g * g) / (1 - g * g * g)) << ")\n";
    out << "J_ZND in [" << num(plan.value.lo) << ", " << num(plan.value.hi) << "]  horizon " << plan.horizon << '\n';
    out << "J_HND in [" << num(hnd.value.lo) << ", " << num(hnd.value.hi) << "]\n";
    out << "strict gap J_ZND - J_ZSD >= " << num(plan.value.lo - zsd.value) << '\n';
    const std::string summary = to_string_with([&](std::ostream& s) {
        s << "quantity,lo,hi\n";
        s << "J_ZSD," << exact(zsd.value) << ',' << exact(zsd.value) << '\n';
        s << "J_ZND," << exact(plan.value.lo) << ',' << exact(plan.value.hi) << '\n';
        s << "J_HND," << exact(hnd.value.lo) << ',' << exact(hnd.value.hi) << '\n';
    });
    write_output(cfg, "chain_summary.csv", summary, out);
    write_output(cfg, "chain_xi.csv",
                 to_string_with([&](std::ostream& s) { write_xi_trajectory_csv(s, plan, machine.n_agent_states()); }),
                 out);
    write_output(cfg, "chain_plan.policy", serialize_policy(plan.policy(), machine), out);
    return kOk;
}

struct OrderingCase {
    std::string name;
    PomdpModel model;
    AgentStateMachine machine;
};

int reproduce_ordering(const RunConfig& cfg, std::ostream& out) {
    const Caps caps = Caps::from_env();
    std::vector<OrderingCase> cases;
    if (!cfg.model_path.empty()) {
        const auto [doc, model] = load(cfg);
        cases.push_back({"model", model, resolve_machine(doc, model, cfg.machine, caps)});
    } else {
        const double g = cfg.gamma.value_or(0.9);
        cases.push_back({"blind", benchmarks::blind_randomization_model(g), singleton_machine(1, 2)});
        cases.push_back({"counting_chain", benchmarks::counting_chain_model(g), identity_machine(2, 2)});
        cases.push_back({"mdp", benchmarks::small_mdp(g), identity_machine(3, 2)});
    }
    OrderingBudgets budgets;
    budgets.designer_tol = cfg.tol;
    budgets.history_tol = std::max(cfg.tol, 1e-4);
    budgets.history_horizon = 400;
    budgets.seed = cfg.seed;
    budgets.caps = caps;

    std::vector<std::future<ClassReport>> jobs;
    for (const auto& c : cases)
        jobs.push_back(std::async(std::launch::async, [&c, &budgets] { return verify_ordering(c.model, c.machine, budgets); }));
    std::size_t violations = 0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const ClassReport report = jobs[i].get();
        violations += report.violations();
        out << "== " << cases[i].name << '\n';
        write_class_report_text(out, report);
        write_output(cfg, "ordering_" + cases[i].name + ".csv",
                     to_string_with([&](std::ostream& s) { write_class_report_csv(s, report); }), out);
    }
    out << "violations = " << violations << '\n';
    return kOk;
}

int reproduce_asql_demo(const RunConfig& cfg, double lr_exponent, std::size_t steps, std::ostream& out) {
    const PomdpModel model = benchmarks::blind_randomization_model(cfg.gamma.value_or(0.9));
    const AgentStateMachine machine = singleton_machine(1, 2);
    const DecisionRule mu = DecisionRule::uniform(1, 2);
    LearningConfig lc;
    lc.steps = steps;
    lc.lr_exponent = lr_exponent;
    lc.seed = cfg.seed;
    lc.eval_stride = std::max<std::size_t>(1, steps / 100);
    const LearningRun run = asql_run(model, machine, mu, lc);
    const FixedPoint fp = asql_fixed_point(model, machine, mu);
    const std::string trace = to_string_with([&](std::ostream& s) {
        s << "step,sup_distance\n";
        for (const auto& snap : run.snapshots) s << snap.step << ',' << exact(sup_distance(snap.q, fp.q)) << '\n';
    });
    out << "fixed point Q = (" << num(fp.q.at(0, 0)) << ", " << num(fp.q.at(0, 1)) << "), residual "
        << exact(fp.residual) << '\n';
    out << "learned Q = (" << num(run.final_q().at(0, 0)) << ", " << num(run.final_q().at(0, 1)) << ")\n";
    out << "sup distance = " << num(sup_distance(run.final_q(), fp.q)) << '\n';
    write_output(cfg, "asql_snapshots.csv", to_string_with([&](std::ostream& s) { write_snapshots_csv(s, run); }), out);
    write_output(cfg, "asql_distance.csv", trace, out);
    return kOk;
}

// ---------------------------------------------------------------------------------- ais-audit

struct AuditArgs {
    std::string metric = "tv";
    std::string behavior;
    std::size_t horizon = 6;
    std::size_t history_horizon = 200;
};

int cmd_ais_audit(const RunConfig& cfg, const AuditArgs& args, std::ostream& out) {
    const Caps caps = Caps::from_env();
    const auto [doc, model] = load(cfg);
    const AgentStateMachine machine = resolve_machine(doc, model, cfg.machine, caps);
    const Index Z = machine.n_agent_states(), A = model.n_actions();
    DecisionRule mu = DecisionRule::uniform(Z, A);
    if (!args.behavior.empty()) {
        std::vector<double> probs = parse_list(args.behavior);
        if (probs.size() != Z * A) throw ValidationError("--behavior needs |Z| * |A| entries");
        try {
            mu = DecisionRule::stochastic(std::move(probs), Z, A);
        } catch (const ContractError& e) {
            throw ValidationError(e.what());
        }
    }
    IpmSpec spec = IpmSpec::total_variation(Z);
    if (args.metric == "wasserstein") {
        std::vector<double> metric(Z * Z);
        for (Index i = 0; i < Z; ++i)
            for (Index j = 0; j < Z; ++j) metric[i * Z + j] = i > j ? double(i - j) : double(j - i);
        spec = IpmSpec::wasserstein(std::move(metric), Z);
    } else if (args.metric != "tv") {
        throw ValidationError("metric must be tv or wasserstein");
    }
    const AisModel ais = fit_ais(model, machine, mu, caps.product_states);
    const AisLossReport report = compute_ais_losses(model, machine, ais, spec, args.horizon, caps.histories);
    const AisSolution sol = solve_ais_dp(ais, model.gamma());
    const double j_ais = policy_evaluate(model, machine, sol.policy).performance;
    const HistoryDpResult hnd = history_dp(model, args.history_horizon, cfg.tol, caps.belief_nodes);
    const double measured = hnd.value.hi - j_ais;
    out << "eps = " << num(report.eps) << ", delta = " << num(report.delta) << '\n';
    out << "J(pi_AIS) = " << num(j_ais) << ", J_HND in [" << num(hnd.value.lo) << ", " << num(hnd.value.hi) << "]\n";
    out << "measured suboptimality <= " << num(measured) << ", bound = " << num(report.bound) << '\n';
    out << (measured <= report.bound + 1e-9 ? "bound holds" : "bound VIOLATED") << '\n';
    write_output(cfg, "ais_report.csv", to_string_with([&](std::ostream& s) { write_ais_report_csv(s, report); }), out);
    const std::string audit = "j_ais,j_hnd_lo,j_hnd_hi,measured,bound\n" + exact(j_ais) + ',' + exact(hnd.value.lo) +
                              ',' + exact(hnd.value.hi) + ',' + exact(measured) + ',' + exact(report.bound) + '\n';
    write_output(cfg, "ais_audit.csv", audit, out);
    write_output(cfg, "ais_model.ais", serialize_ais(ais), out);
    return measured <= report.bound + 1e-9 ? kOk : kFailure;
}

// --------------------------------------------------------------------------------------- plan

int cmd_plan(const RunConfig& cfg, std::optional<std::size_t> horizon, std::ostream& out) {
    const Caps caps = Caps::from_env();
    const auto [doc, model] = load(cfg);
    const AgentStateMachine machine = resolve_machine(doc, model, cfg.machine, caps);
    DesignerOptions opts;
    opts.tol = cfg.tol;
    opts.horizon = horizon;
    opts.seed = cfg.seed;
    opts.caps = caps;
    const MetaPlan plan = plan_designer(model, machine, opts);
    out << "J_ZND in [" << num(plan.value.lo) << ", " << num(plan.value.hi) << "]  horizon " << plan.horizon
        << ", nodes " << plan.nodes_expanded << '\n';
    write_output(cfg, "plan.policy", serialize_policy(plan.policy(), machine), out);
    write_output(cfg, "plan_xi.csv",
                 to_string_with([&](std::ostream& s) { write_xi_trajectory_csv(s, plan, machine.n_agent_states()); }),
                 out);
    return kOk;
}

// ------------------------------------------------------------------------------------- export

int cmd_export(const std::string& which, std::optional<double> gamma, const std::string& path, std::ostream& out) {
    const double g = gamma.value_or(0.9);
    ModelDocument doc{benchmarks::small_mdp(g), {}, {}};
    if (which == "blind") {
        doc = {benchmarks::blind_randomization_model(g), {singleton_machine(1, 2).with_label("blind")},
               {{"description", "two-action blind chain, stationary randomization helps"}}};
    } else if (which == "counting-chain") {
        doc = {benchmarks::counting_chain_model(g), {identity_machine(2, 2).with_label("parity")},
               {{"description", "deterministic chain with parity observations"}}};
    } else {
        doc = {benchmarks::small_mdp(g), {identity_machine(3, 2).with_label("state")},
               {{"description", "fully observed three-state MDP"}}};
    }
    write_text_file_atomic(path, serialize_native(doc));
    out << "wrote " << path << '\n';
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Agent-state POMDP toolkit"};
    app.require_subcommand(1);
    RunConfig cfg;

    EvaluateArgs eval_args;
    auto* evaluate = app.add_subcommand("evaluate", "exact evaluation of a stationary rule or a policy file");
    add_common(evaluate, cfg, true);
    evaluate->add_option("--rule", eval_args.rule, "deterministic rule: one action per agent state, comma separated");
    evaluate->add_option("--probs", eval_args.probs, "stochastic rule: |Z|*|A| probabilities, row major");
    evaluate->add_option("--policy", eval_args.policy, "policy file");

    std::string which;
    double lr_exponent = 0.85;
    std::size_t steps = 1'000'000;
    auto* reproduce = app.add_subcommand("reproduce", "reference experiments");
    add_common(reproduce, cfg, false);
    reproduce->add_option("which", which, "blind-sweep | counting-chain | ordering | asql-demo")
        ->required()
        ->check(CLI::IsMember({"blind-sweep", "counting-chain", "ordering", "asql-demo"}));
    reproduce->add_option("--lr-exponent", lr_exponent, "asql-demo step-size exponent")->check(CLI::Range(0.5, 1.0));
    reproduce->add_option("--steps", steps, "asql-demo steps")->check(CLI::PositiveNumber);

    AuditArgs audit_args;
    auto* audit = app.add_subcommand("ais-audit", "fit an AIS, measure its losses and check the suboptimality bound");
    add_common(audit, cfg, true);
    audit->add_option("--metric", audit_args.metric, "tv | wasserstein")->check(CLI::IsMember({"tv", "wasserstein"}));
    audit->add_option("--behavior", audit_args.behavior, "behaviour rule probabilities (default uniform)");
    audit->add_option("--horizon", audit_args.horizon, "depth of the per-step loss measurement");
    audit->add_option("--history-horizon", audit_args.history_horizon, "depth limit of the history DP reference");

    std::optional<std::size_t> plan_horizon;
    auto* plan = app.add_subcommand("plan", "designer search for a non-stationary deterministic plan");
    add_common(plan, cfg, true);
    plan->add_option("--horizon", plan_horizon, "explicit search horizon");

    std::string bench = "mdp", export_path;
    std::optional<double> export_gamma;
    auto* exporter = app.add_subcommand("export", "write a built-in benchmark as a native model file");
    exporter->add_option("benchmark", bench, "blind | counting-chain | mdp")
        ->required()
        ->check(CLI::IsMember({"blind", "counting-chain", "mdp"}));
    exporter->add_option("--gamma", export_gamma, "discount factor")->check(CLI::Range(0.0, 1.0));
    exporter->add_option("--out", export_path, "output file")->required();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    }

    try {
        if (evaluate->parsed()) return cmd_evaluate(cfg, eval_args, out);
        if (reproduce->parsed()) {
            if (which == "blind-sweep") return reproduce_blind_sweep(cfg, out);
            if (which == "counting-chain") return reproduce_counting_chain(cfg, out);
            if (which == "ordering") return reproduce_ordering(cfg, out);
            return reproduce_asql_demo(cfg, lr_exponent, steps, out);
        }
        if (audit->parsed()) return cmd_ais_audit(cfg, audit_args, out);
        if (plan->parsed()) return cmd_plan(cfg, plan_horizon, out);
        if (exporter->parsed()) return cmd_export(bench, export_gamma, export_path, out);
    } catch (const CapacityError& e) {
        err << "capacity error: " << e.what() << '\n';
        return kCapacity;
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const ContractError& e) {
        err << "error: " << e.what() << '\n';
        return kInvalid;
    } catch (const std::exception& e) {
        err << "failure: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}

}  // namespace agentpomdp::cli
