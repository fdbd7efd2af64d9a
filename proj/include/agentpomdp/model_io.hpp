#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "agentpomdp/ais.hpp"
#include "agentpomdp/machine.hpp"
#include "agentpomdp/model.hpp"
#include "agentpomdp/policy.hpp"

namespace agentpomdp {

/// A model with named agent-state machines and free-form metadata.
struct ModelDocument {
    PomdpModel model;
    std::vector<AgentStateMachine> machines;
    std::map<std::string, std::string> metadata;

    /// Throws ContractError for an unknown name.
    const AgentStateMachine& machine(std::string_view name) const;
};

/// Same model tables, machines (names, kinds, tables) and metadata.
bool documents_equal(const ModelDocument& a, const ModelDocument& b);
bool machines_equal(const AgentStateMachine& a, const AgentStateMachine& b);

/// Rows may deviate from 1 by at most this much; they are renormalised when off by more than 1e-12.
inline constexpr double kParseSumTolerance = 1e-9;

/// Native `.pomdpz` text. Errors carry line and column (ParseError).
ModelDocument parse_native(std::string_view text);
std::string serialize_native(const ModelDocument& doc);

/// Reads a file; missing files raise ValidationError.
std::string read_text_file(const std::string& path);
/// Writes through a temporary file and a rename.
void write_text_file_atomic(const std::string& path, std::string_view text);

ModelDocument load_model_file(const std::string& path);

struct ParsedPolicy {
    Policy policy;
    std::string machine;  ///< label of the machine the policy was written for (may be empty)
};

std::string serialize_policy(const Policy& policy, const AgentStateMachine& machine);
ParsedPolicy parse_policy(std::string_view text);

std::string serialize_ais(const AisModel& ais);
AisModel parse_ais(std::string_view text);

/// Classic `.pomdp` subset: discount, values: reward, states/actions/observations (count or names),
/// start (vector or uniform), T/O in entry, row and matrix forms with uniform/identity, R entries and rows,
/// `*` wildcards. r(s, a) = sum_{s', y} T(s' | s, a) O(y | s', a) R(a, s, s', y).
PomdpModel parse_cassandra(std::string_view text);

/// Marginals T(s' | s, a) at (s * A + a) * S + s' and O(y | s', a) at (a * S + s') * Y + y of the joint kernel.
/// O rows of unreachable s' are uniform.
struct FactoredKernel {
    std::vector<double> transition;
    std::vector<double> observation;
};
FactoredKernel factor_kernel(const PomdpModel& model);

}  // namespace agentpomdp
