#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

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

namespace py = pybind11;
using namespace agentpomdp;

namespace {

ModelData data_from(Index S, Index A, Index Y, std::vector<double> kernel, std::vector<double> reward,
                    std::vector<double> init_state, std::vector<double> init_obs, double gamma) {
    ModelData d;
    d.n_states = S;
    d.n_actions = A;
    d.n_obs = Y;
    d.kernel = std::move(kernel);
    d.reward = std::move(reward);
    d.init_state = std::move(init_state);
    d.init_obs = std::move(init_obs);
    d.gamma = gamma;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Agent-state POMDP toolkit";

    auto& base = py::register_exception<Error>(m, "AgentPomdpError", PyExc_RuntimeError);
    auto& validation = py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", validation.ptr());
    py::register_exception<UnsupportedFeatureError>(m, "UnsupportedFeatureError", validation.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<CapacityError>(m, "CapacityError", base.ptr());
    py::register_exception<AmbiguityError>(m, "AmbiguityError", base.ptr());
    py::register_exception<ZeroVisitError>(m, "ZeroVisitError", base.ptr());
    py::register_exception<ImpossibleObservationError>(m, "ImpossibleObservationError", base.ptr());

    py::class_<Interval>(m, "Interval")
        .def_readonly("lo", &Interval::lo)
        .def_readonly("hi", &Interval::hi)
        .def("contains", &Interval::contains, py::arg("x"), py::arg("slack") = 0.0)
        .def("__repr__", [](const Interval& i) { return "Interval(" + std::to_string(i.lo) + ", " + std::to_string(i.hi) + ")"; });

    py::class_<PomdpModel>(m, "Model")
        .def(py::init([](Index S, Index A, Index Y, std::vector<double> kernel, std::vector<double> reward,
                         std::vector<double> init_state, double gamma, std::vector<double> init_obs) {
                 return PomdpModel(data_from(S, A, Y, std::move(kernel), std::move(reward), std::move(init_state),
                                             std::move(init_obs), gamma));
             }),
             py::arg("n_states"), py::arg("n_actions"), py::arg("n_obs"), py::arg("kernel"), py::arg("reward"),
             py::arg("init_state"), py::arg("gamma"), py::arg("init_obs") = std::vector<double>{})
        .def_property_readonly("n_states", &PomdpModel::n_states)
        .def_property_readonly("n_actions", &PomdpModel::n_actions)
        .def_property_readonly("n_obs", &PomdpModel::n_obs)
        .def_property_readonly("gamma", &PomdpModel::gamma)
        .def("reward", &PomdpModel::reward)
        .def("kernel", &PomdpModel::kernel)
        .def("state_transition", &PomdpModel::state_transition)
        .def("with_gamma", &PomdpModel::with_gamma);

    py::class_<AgentStateMachine>(m, "Machine")
        .def(py::init<Index, Index, Index, std::vector<Index>, std::vector<Index>, std::string>(),
             py::arg("n_agent_states"), py::arg("n_obs"), py::arg("n_actions"), py::arg("init"), py::arg("update"),
             py::arg("label") = "table")
        .def_property_readonly("n_agent_states", &AgentStateMachine::n_agent_states)
        .def_property_readonly("label", &AgentStateMachine::label)
        .def("init", &AgentStateMachine::init)
        .def("update", &AgentStateMachine::update);
    m.def("identity_machine", &identity_machine);
    m.def("singleton_machine", &singleton_machine);
    m.def("window_machine", &window_machine, py::arg("n"), py::arg("n_obs"), py::arg("n_actions"),
          py::arg("cap") = 1'000'000);
    m.def("belief_machine", &belief_machine, py::arg("model"), py::arg("k"), py::arg("cap") = 1'000'000);

    py::class_<DecisionRule>(m, "DecisionRule")
        .def_static("deterministic", &DecisionRule::deterministic)
        .def_static("stochastic", &DecisionRule::stochastic)
        .def_static("uniform", &DecisionRule::uniform)
        .def_property_readonly("n_agent_states", &DecisionRule::n_agent_states)
        .def_property_readonly("n_actions", &DecisionRule::n_actions)
        .def_property_readonly("is_deterministic", &DecisionRule::is_deterministic)
        .def_property_readonly("probs", &DecisionRule::probs)
        .def("prob", &DecisionRule::prob)
        .def("action", &DecisionRule::action);

    py::class_<Policy>(m, "Policy")
        .def_static("stationary", &Policy::stationary)
        .def_static("non_stationary", &Policy::non_stationary)
        .def_property_readonly("is_stationary", &Policy::is_stationary)
        .def_property_readonly("rules", &Policy::rules)
        .def_property_readonly("tail", &Policy::tail);

    py::class_<ModelDocument>(m, "ModelDocument")
        .def_readonly("model", &ModelDocument::model)
        .def_readonly("machines", &ModelDocument::machines)
        .def_readonly("metadata", &ModelDocument::metadata)
        .def("machine", &ModelDocument::machine, py::return_value_policy::copy);
    m.def("parse_native", [](const std::string& text) { return parse_native(text); });
    m.def("serialize_native", &serialize_native);
    m.def("parse_cassandra", [](const std::string& text) { return parse_cassandra(text); });
    m.def("load_model_file", &load_model_file);
    m.def("serialize_policy", &serialize_policy);
    m.def("parse_policy", [](const std::string& text) { return parse_policy(text).policy; });

    py::class_<EvalBundle>(m, "EvalBundle")
        .def_readonly("performance", &EvalBundle::performance)
        .def_readonly("value", &EvalBundle::value)
        .def_readonly("q", &EvalBundle::q)
        .def_readonly("occupancy", &EvalBundle::occupancy);
    m.def("policy_evaluate",
          py::overload_cast<const PomdpModel&, const AgentStateMachine&, const DecisionRule&>(&policy_evaluate));
    m.def("performance", [](const PomdpModel& model, const AgentStateMachine& mach, const Policy& p) {
        const PerformanceResult r = performance(model, mach, p);
        return py::make_tuple(r.value, r.radius);
    });
    m.def("sweep_1param", [](const PomdpModel& model, const std::vector<double>& grid) {
        std::vector<std::pair<double, double>> out;
        for (const SweepPoint& pt : sweep_1param(model, grid)) out.emplace_back(pt.p, pt.value);
        return out;
    });
    m.def("unit_grid", &unit_grid);
    m.def("exact_policy_gradient",
          [](const PomdpModel& model, const AgentStateMachine& mach, std::vector<double> theta) {
              SoftmaxParams p = SoftmaxParams::zeros(mach.n_agent_states(), model.n_actions());
              if (theta.size() != p.theta.size()) throw ContractError("theta needs |Z| * |A| entries");
              p.theta = std::move(theta);
              return exact_policy_gradient(model, mach, p);
          });

    py::class_<MetaPlan>(m, "MetaPlan")
        .def_readonly("value", &MetaPlan::value)
        .def_readonly("horizon", &MetaPlan::horizon)
        .def_readonly("nodes_expanded", &MetaPlan::nodes_expanded)
        .def("policy", &MetaPlan::policy);
    m.def("plan_designer",
          [](const PomdpModel& model, const AgentStateMachine& mach, double tol, std::optional<std::size_t> horizon) {
              DesignerOptions o;
              o.tol = tol;
              o.horizon = horizon;
              o.caps = Caps::from_env();
              return plan_designer(model, mach, o);
          },
          py::arg("model"), py::arg("machine"), py::arg("tol") = 1e-6, py::arg("horizon") = py::none());
    m.def("enumerate_stationary_det", [](const PomdpModel& model, const AgentStateMachine& mach) {
        const StationaryDetResult r = enumerate_stationary_det(model, mach);
        return py::make_tuple(r.best, r.value);
    });
    m.def("history_dp", [](const PomdpModel& model, std::size_t horizon, double tol) {
        return history_dp(model, horizon, tol).value;
    });
    m.def("verify_ordering",
          [](const PomdpModel& model, const AgentStateMachine& mach, std::optional<std::size_t> designer_horizon,
             std::size_t history_horizon, double history_tol) {
              OrderingBudgets b;
              b.designer_horizon = designer_horizon;
              b.history_horizon = history_horizon;
              b.history_tol = history_tol;
              const ClassReport r = verify_ordering(model, mach, b);
              std::ostringstream text;
              write_class_report_text(text, r);
              py::dict out;
              out["violations"] = r.violations();
              out["j_zsd"] = r.j_zsd;
              out["j_znd"] = r.j_znd;
              out["j_zss"] = r.j_zss;
              out["j_hnd"] = r.j_hnd;
              out["text"] = text.str();
              return out;
          },
          py::arg("model"), py::arg("machine"), py::arg("designer_horizon") = py::none(),
          py::arg("history_horizon") = 200, py::arg("history_tol") = 1e-6);

    py::class_<AisModel>(m, "AisModel")
        .def_readonly("p_ais", &AisModel::p_ais)
        .def_readonly("r_ais", &AisModel::r_ais)
        .def_readonly("unvisited", &AisModel::unvisited);
    m.def("fit_ais", [](const PomdpModel& model, const AgentStateMachine& mach, const DecisionRule& mu) {
        return fit_ais(model, mach, mu);
    });
    m.def("ais_audit",
          [](const PomdpModel& model, const AgentStateMachine& mach, const AisModel& ais, std::size_t horizon) {
              const IpmSpec tv = IpmSpec::total_variation(mach.n_agent_states());
              const AisLossReport rep = compute_ais_losses(model, mach, ais, tv, horizon);
              const AisSolution sol = solve_ais_dp(ais, model.gamma());
              py::dict out;
              out["eps"] = rep.eps;
              out["delta"] = rep.delta;
              out["eps_tail"] = rep.eps_tail;
              out["delta_tail"] = rep.delta_tail;
              out["bound"] = rep.bound;
              out["policy"] = sol.policy;
              out["v"] = sol.v;
              return out;
          },
          py::arg("model"), py::arg("machine"), py::arg("ais"), py::arg("horizon") = 6);
    m.def("asql_fixed_point", [](const PomdpModel& model, const AgentStateMachine& mach, const DecisionRule& mu) {
        const FixedPoint fp = asql_fixed_point(model, mach, mu);
        return py::make_tuple(fp.q.q, fp.residual);
    });
    m.def("asql_run",
          [](const PomdpModel& model, const AgentStateMachine& mach, const DecisionRule& mu, std::size_t steps,
             std::uint64_t seed, double lr_exponent) {
              LearningConfig c;
              c.steps = steps;
              c.seed = seed;
              c.lr_exponent = lr_exponent;
              return asql_run(model, mach, mu, c).final_q().q;
          },
          py::arg("model"), py::arg("machine"), py::arg("mu"), py::arg("steps") = 1'000'000, py::arg("seed") = 0,
          py::arg("lr_exponent") = 0.85);

    m.def("blind_randomization_model", &benchmarks::blind_randomization_model, py::arg("gamma") = 0.9);
    m.def("counting_chain_model", &benchmarks::counting_chain_model, py::arg("gamma") = 0.9, py::arg("n_states") = 0);
    m.def("small_mdp", &benchmarks::small_mdp, py::arg("gamma") = 0.9);
    m.def("random_pomdp",
          [](std::uint64_t seed, Index n_states, Index n_actions, Index n_obs, double gamma) {
              Rng rng(seed);
              return benchmarks::random_pomdp(rng, n_states, n_actions, n_obs, gamma);
          },
          py::arg("seed"), py::arg("n_states"), py::arg("n_actions"), py::arg("n_obs"), py::arg("gamma") = 0.9);
}
