#include "agentpomdp/model_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <unistd.h>

#include "agentpomdp/errors.hpp"

namespace agentpomdp {

const AgentStateMachine& ModelDocument::machine(std::string_view name) const {
    for (const auto& m : machines)
        if (m.label() == name) return m;
    throw ContractError("no machine named '" + std::string(name) + "'");
}

bool machines_equal(const AgentStateMachine& a, const AgentStateMachine& b) {
    return a.label() == b.label() && a.spec().kind == b.spec().kind && a.spec().parameter == b.spec().parameter &&
           a.n_agent_states() == b.n_agent_states() && a.n_obs() == b.n_obs() && a.n_actions() == b.n_actions() &&
           a.init_table() == b.init_table() && a.update_table() == b.update_table();
}

bool documents_equal(const ModelDocument& a, const ModelDocument& b) {
    if (!(a.model.data() == b.model.data()) || a.metadata != b.metadata || a.machines.size() != b.machines.size())
        return false;
    for (Index i = 0; i < a.machines.size(); ++i)
        if (!machines_equal(a.machines[i], b.machines[i])) return false;
    return true;
}

namespace {

struct Token {
    std::string_view text;
    std::size_t line;
    std::size_t column;
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

[[noreturn]] void fail(const Token& t, const std::string& what) { throw ParseError(what, t.line, t.column); }

std::optional<double> to_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    std::string copy(s);
    char* end = nullptr;
    const double v = std::strtod(copy.c_str(), &end);
    if (end != copy.c_str() + copy.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<Index> to_index(std::string_view s) {
    Index v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

double need_double(const Token& t) {
    if (auto v = to_double(t.text)) return *v;
    fail(t, "expected a number, found '" + std::string(t.text) + "'");
}

Index need_index(const Token& t, Index bound, const char* what) {
    auto v = to_index(t.text);
    if (!v) fail(t, std::string("expected ") + what + " index, found '" + std::string(t.text) + "'");
    if (*v >= bound) fail(t, std::string(what) + " index " + std::string(t.text) + " out of range");
    return *v;
}

/// Lines with whitespace-separated tokens; lines starting with '#' are comments.
struct Line {
    std::size_t number;
    std::string_view text;
    std::vector<Token> tokens;
};

std::vector<Line> split_lines(std::string_view text) {
    std::vector<Line> lines;
    std::size_t pos = 0, number = 0;
    while (pos <= text.size()) {
        const std::size_t end = std::min(text.find('\n', pos), text.size());
        ++number;
        std::string_view raw = text.substr(pos, end - pos);
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
        Line line{number, raw, {}};
        std::size_t i = 0;
        while (i < raw.size()) {
            while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
            if (i >= raw.size()) break;
            const std::size_t start = i;
            while (i < raw.size() && !std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
            line.tokens.push_back({raw.substr(start, i - start), number, start + 1});
        }
        if (!line.tokens.empty() && line.tokens.front().text.front() != '#') lines.push_back(std::move(line));
        if (end == text.size()) break;
        pos = end + 1;
    }
    return lines;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

/// `key = value` with the value taken verbatim (trimmed) from the rest of the line.
std::pair<Token, std::string> key_value(const Line& line) {
    if (line.tokens.size() < 2 || line.tokens[1].text != "=") fail(line.tokens.front(), "expected 'key = value'");
    const std::size_t eq = line.tokens[1].column;  // 1-based column of '='
    return {line.tokens[0], std::string(trim(line.text.substr(eq)))};
}

/// Checks a probability row, renormalising small deviations. Returns false when off by more than the tolerance.
bool normalise_row(double* row, Index n) {
    double total = 0.0;
    for (Index i = 0; i < n; ++i) total += row[i];
    if (std::abs(total - 1.0) > kParseSumTolerance) return false;
    if (std::abs(total - 1.0) > 1e-12)
        for (Index i = 0; i < n; ++i) row[i] /= total;
    return true;
}

bool is_name(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
    });
}

struct MachineDraft {
    std::string name;
    Token header;
    std::optional<Token> kind;
    std::string kind_name;
    Index parameter = 0;
    std::optional<Index> n_z;
    std::vector<std::optional<Index>> init;
    std::vector<std::optional<Index>> update;
};

}  // namespace

ModelDocument parse_native(std::string_view text) {
    const auto lines = split_lines(text);
    std::optional<Index> S, A, Y;
    std::optional<double> gamma, r_max;
    std::vector<double> kernel, reward, init_state, init_obs;
    std::vector<char> kernel_set, reward_set, init_set, obs_set;
    std::vector<std::size_t> kernel_row_line;
    std::size_t kernel_header_line = 0, init_header_line = 0;
    bool any_obs = false, dims_ready = false;
    std::vector<MachineDraft> drafts;
    std::map<std::string, std::string> metadata;
    std::set<std::string> seen_sections;
    std::string section;

    auto ensure_dims = [&](const Token& at) {
        if (dims_ready) return;
        if (!S || !A || !Y) fail(at, "[model] must define states, actions and observations before this section");
        if (*S == 0 || *A == 0 || *Y == 0) fail(at, "model dimensions must be positive");
        kernel.assign(*S * *A * *S * *Y, 0.0);
        kernel_set.assign(kernel.size(), 0);
        kernel_row_line.assign(*S * *A, 0);
        reward.assign(*S * *A, 0.0);
        reward_set.assign(reward.size(), 0);
        init_state.assign(*S, 0.0);
        init_set.assign(*S, 0);
        init_obs.assign(*S * *Y, 0.0);
        obs_set.assign(init_obs.size(), 0);
        dims_ready = true;
    };

    for (const auto& line : lines) {
        const auto& t = line.tokens;
        const Token& head = t.front();
        if (head.text.front() == '[') {
            std::string header(trim(line.text));
            if (header.back() != ']') fail(head, "section header must end with ']'");
            header = header.substr(1, header.size() - 2);
            std::istringstream hs(header);
            std::string kind, name, extra;
            hs >> kind >> name >> extra;
            if (!extra.empty()) fail(head, "unexpected text in section header");
            if (kind == "machine") {
                if (!is_name(name)) fail(head, "machine section needs a name");
                for (const auto& d : drafts)
                    if (d.name == name) fail(head, "duplicate machine name '" + name + "'");
                ensure_dims(head);
                drafts.push_back({name, head, std::nullopt, "", 0, std::nullopt, {}, {}});
            } else {
                if (!name.empty()) fail(head, "section [" + kind + "] takes no name");
                if (kind != "model" && kind != "kernel" && kind != "reward" && kind != "init" && kind != "metadata")
                    fail(head, "unknown section [" + kind + "]");
                if (!seen_sections.insert(kind).second) fail(head, "duplicate section [" + kind + "]");
                if (kind != "model" && kind != "metadata") ensure_dims(head);
                if (kind == "kernel") kernel_header_line = line.number;
                if (kind == "init") init_header_line = line.number;
            }
            section = kind;
            continue;
        }

        if (section.empty()) fail(head, "content before the first section");
        if (section == "model") {
            const auto [key, value] = key_value(line);
            if (dims_ready) fail(key, "[model] cannot change after other sections");
            const Token vt{t.size() > 2 ? t[2].text : std::string_view{}, line.number, t.size() > 2 ? t[2].column : 0};
            if (t.size() != 3) fail(key, "expected a single value");
            if (key.text == "states") S = need_index(vt, static_cast<Index>(-1), "count");
            else if (key.text == "actions") A = need_index(vt, static_cast<Index>(-1), "count");
            else if (key.text == "observations") Y = need_index(vt, static_cast<Index>(-1), "count");
            else if (key.text == "gamma") gamma = need_double(vt);
            else if (key.text == "r_max") r_max = need_double(vt);
            else fail(key, "unknown [model] key '" + std::string(key.text) + "'");
        } else if (section == "kernel") {
            if (t.size() != 6 || t[2].text != "->") fail(head, "kernel rows read 's a -> s' y' p'");
            const Index s = need_index(t[0], *S, "state"), a = need_index(t[1], *A, "action");
            const Index sn = need_index(t[3], *S, "state"), y = need_index(t[4], *Y, "observation");
            const double p = need_double(t[5]);
            if (p < 0.0) fail(t[5], "probabilities must be nonnegative");
            const Index k = ((s * *A + a) * *S + sn) * *Y + y;
            if (kernel_set[k]) fail(head, "duplicate kernel entry");
            kernel_set[k] = 1;
            kernel[k] = p;
            kernel_row_line[s * *A + a] = line.number;
        } else if (section == "reward") {
            if (t.size() != 3) fail(head, "reward rows read 's a r'");
            const Index s = need_index(t[0], *S, "state"), a = need_index(t[1], *A, "action");
            if (reward_set[s * *A + a]) fail(head, "duplicate reward entry");
            reward_set[s * *A + a] = 1;
            reward[s * *A + a] = need_double(t[2]);
        } else if (section == "init") {
            if (head.text == "state") {
                if (t.size() != 3) fail(head, "expected 'state s p'");
                const Index s = need_index(t[1], *S, "state");
                if (init_set[s]) fail(head, "duplicate initial-state entry");
                init_set[s] = 1;
                init_state[s] = need_double(t[2]);
                if (init_state[s] < 0.0) fail(t[2], "probabilities must be nonnegative");
            } else if (head.text == "obs") {
                if (t.size() != 4) fail(head, "expected 'obs s y p'");
                const Index s = need_index(t[1], *S, "state"), y = need_index(t[2], *Y, "observation");
                if (obs_set[s * *Y + y]) fail(head, "duplicate initial-observation entry");
                obs_set[s * *Y + y] = 1;
                init_obs[s * *Y + y] = need_double(t[3]);
                if (init_obs[s * *Y + y] < 0.0) fail(t[3], "probabilities must be nonnegative");
                any_obs = true;
            } else {
                fail(head, "expected 'state' or 'obs'");
            }
        } else if (section == "machine") {
            auto& d = drafts.back();
            if (t.size() >= 2 && t[1].text == "=") {
                const auto [key, value] = key_value(line);
                if (key.text == "kind") {
                    if (d.kind) fail(key, "duplicate kind");
                    d.kind = t[2];
                    d.kind_name = std::string(t[2].text);
                    const bool takes = d.kind_name == "window" || d.kind_name == "belief";
                    if (d.kind_name != "identity" && d.kind_name != "singleton" && d.kind_name != "table" && !takes)
                        fail(t[2], "unknown machine kind '" + d.kind_name + "'");
                    if (takes) {
                        if (t.size() != 4) fail(t[2], "machine kind '" + d.kind_name + "' needs one parameter");
                        d.parameter = need_index(t[3], static_cast<Index>(-1), "parameter");
                    } else if (t.size() != 3) {
                        fail(t[3], "unexpected text after machine kind");
                    }
                } else if (key.text == "agent_states") {
                    if (t.size() != 3) fail(key, "expected a single value");
                    d.n_z = need_index(t[2], static_cast<Index>(-1), "count");
                    if (*d.n_z == 0) fail(t[2], "agent_states must be positive");
                    d.init.assign(*Y, std::nullopt);
                    d.update.assign(*d.n_z * *Y * *A, std::nullopt);
                } else {
                    fail(key, "unknown machine key '" + std::string(key.text) + "'");
                }
            } else if (head.text == "init" || head.text == "update") {
                if (d.kind_name != "table") fail(head, "table rows are only allowed for kind = table");
                if (!d.n_z) fail(head, "agent_states must precede table rows");
                if (head.text == "init") {
                    if (t.size() != 4 || t[2].text != "->") fail(head, "expected 'init y -> z'");
                    const Index y = need_index(t[1], *Y, "observation");
                    if (d.init[y]) fail(head, "duplicate init entry");
                    d.init[y] = need_index(t[3], *d.n_z, "agent state");
                } else {
                    if (t.size() != 6 || t[4].text != "->") fail(head, "expected 'update z y a -> z''");
                    const Index z = need_index(t[1], *d.n_z, "agent state"), y = need_index(t[2], *Y, "observation");
                    const Index a = need_index(t[3], *A, "action");
                    auto& cell = d.update[(z * *Y + y) * *A + a];
                    if (cell) fail(head, "duplicate update entry");
                    cell = need_index(t[5], *d.n_z, "agent state");
                }
            } else {
                fail(head, "unexpected machine line");
            }
        } else if (section == "metadata") {
            const auto [key, value] = key_value(line);
            if (!metadata.emplace(std::string(key.text), value).second)
                fail(key, "duplicate metadata key '" + std::string(key.text) + "'");
        }
    }

    const Token eof{"", lines.empty() ? 1 : lines.back().number, 1};
    if (!seen_sections.count("model")) fail(eof, "missing [model] section");
    if (!gamma) fail(eof, "[model] must define gamma");
    ensure_dims(eof);
    if (!seen_sections.count("kernel")) fail(eof, "missing [kernel] section");
    if (!seen_sections.count("reward")) fail(eof, "missing [reward] section");
    if (!seen_sections.count("init")) fail(eof, "missing [init] section");

    for (Index s = 0; s < *S; ++s)
        for (Index a = 0; a < *A; ++a) {
            const Index width = *S * *Y;
            if (!normalise_row(kernel.data() + (s * *A + a) * width, width)) {
                const std::size_t at = kernel_row_line[s * *A + a] ? kernel_row_line[s * *A + a] : kernel_header_line;
                throw ParseError("kernel row for state " + std::to_string(s) + ", action " + std::to_string(a) +
                                     " does not sum to 1",
                                 at, 1);
            }
            if (!reward_set[s * *A + a])
                fail(eof, "missing reward for state " + std::to_string(s) + ", action " + std::to_string(a));
        }
    if (!normalise_row(init_state.data(), *S))
        throw ParseError("initial-state distribution does not sum to 1", init_header_line, 1);
    if (any_obs) {
        for (Index s = 0; s < *S; ++s)
            if (!normalise_row(init_obs.data() + s * *Y, *Y))
                throw ParseError("initial-observation row for state " + std::to_string(s) + " does not sum to 1",
                                 init_header_line, 1);
    } else {
        init_obs.clear();
    }

    ModelData data;
    data.n_states = *S;
    data.n_actions = *A;
    data.n_obs = *Y;
    data.kernel = std::move(kernel);
    data.reward = std::move(reward);
    data.init_state = std::move(init_state);
    data.init_obs = std::move(init_obs);
    data.gamma = *gamma;
    data.r_max = r_max;
    ModelDocument doc{PomdpModel(std::move(data)), {}, std::move(metadata)};

    for (auto& d : drafts) {
        if (!d.kind) fail(d.header, "machine '" + d.name + "' has no kind");
        if (d.kind_name == "identity") {
            doc.machines.push_back(identity_machine(*Y, *A).with_label(d.name));
        } else if (d.kind_name == "singleton") {
            doc.machines.push_back(singleton_machine(*Y, *A).with_label(d.name));
        } else if (d.kind_name == "window") {
            doc.machines.push_back(window_machine(d.parameter, *Y, *A).with_label(d.name));
        } else if (d.kind_name == "belief") {
            if (d.parameter == 0) fail(*d.kind, "belief lattice resolution must be positive");
            doc.machines.push_back(belief_machine(doc.model, d.parameter).with_label(d.name));
        } else {
            if (!d.n_z) fail(d.header, "table machine '" + d.name + "' needs agent_states");
            std::vector<Index> init(*Y), update(d.update.size());
            for (Index y = 0; y < *Y; ++y) {
                if (!d.init[y]) fail(d.header, "table machine '" + d.name + "' misses init for observation " + std::to_string(y));
                init[y] = *d.init[y];
            }
            for (Index i = 0; i < update.size(); ++i) {
                if (!d.update[i]) fail(d.header, "table machine '" + d.name + "' has an incomplete update table");
                update[i] = *d.update[i];
            }
            doc.machines.emplace_back(*d.n_z, *Y, *A, std::move(init), std::move(update), d.name,
                                      MachineSpec{MachineKind::Table, 0});
        }
    }
    return doc;
}

std::string serialize_native(const ModelDocument& doc) {
    const ModelData& d = doc.model.data();
    std::ostringstream out;
    out << "[model]\n";
    out << "states = " << d.n_states << "\nactions = " << d.n_actions << "\nobservations = " << d.n_obs << '\n';
    out << "gamma = " << fmt(d.gamma) << '\n';
    if (d.r_max) out << "r_max = " << fmt(*d.r_max) << '\n';
    out << "\n[kernel]\n";
    const Index S = d.n_states, A = d.n_actions, Y = d.n_obs;
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a)
            for (Index sn = 0; sn < S; ++sn)
                for (Index y = 0; y < Y; ++y) {
                    const double p = d.kernel[((s * A + a) * S + sn) * Y + y];
                    if (p != 0.0) out << s << ' ' << a << " -> " << sn << ' ' << y << ' ' << fmt(p) << '\n';
                }
    out << "\n[reward]\n";
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a) out << s << ' ' << a << ' ' << fmt(d.reward[s * A + a]) << '\n';
    out << "\n[init]\n";
    for (Index s = 0; s < S; ++s)
        if (d.init_state[s] != 0.0) out << "state " << s << ' ' << fmt(d.init_state[s]) << '\n';
    for (Index i = 0; i < d.init_obs.size(); ++i)
        if (d.init_obs[i] != 0.0) out << "obs " << i / Y << ' ' << i % Y << ' ' << fmt(d.init_obs[i]) << '\n';

    std::set<std::string> names;
    for (const auto& m : doc.machines) {
        if (!is_name(m.label())) throw ContractError("machine label '" + m.label() + "' is not a valid name");
        if (!names.insert(m.label()).second) throw ContractError("duplicate machine label '" + m.label() + "'");
        out << "\n[machine " << m.label() << "]\n";
        switch (m.spec().kind) {
            case MachineKind::Identity: out << "kind = identity\n"; break;
            case MachineKind::Singleton: out << "kind = singleton\n"; break;
            case MachineKind::Window: out << "kind = window " << m.spec().parameter << '\n'; break;
            case MachineKind::Belief: out << "kind = belief " << m.spec().parameter << '\n'; break;
            case MachineKind::Table: {
                out << "kind = table\nagent_states = " << m.n_agent_states() << '\n';
                for (Index y = 0; y < Y; ++y) out << "init " << y << " -> " << m.init_unchecked(y) << '\n';
                for (Index z = 0; z < m.n_agent_states(); ++z)
                    for (Index y = 0; y < Y; ++y)
                        for (Index a = 0; a < A; ++a)
                            out << "update " << z << ' ' << y << ' ' << a << " -> " << m.update_unchecked(z, y, a)
                                << '\n';
                break;
            }
        }
    }
    if (!doc.metadata.empty()) {
        out << "\n[metadata]\n";
        for (const auto& [k, v] : doc.metadata) {
            if (!is_name(k)) throw ContractError("metadata key '" + k + "' is not a valid name");
            if (v.find('\n') != std::string::npos || trim(v) != v)
                throw ContractError("metadata value for '" + k + "' must be a single trimmed line");
            out << k << " = " << v << '\n';
        }
    }
    return out.str();
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file_atomic(const std::string& path, std::string_view text) {
    const std::filesystem::path target(path);
    const std::filesystem::path tmp = target.string() + ".tmp" + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << text;
        out.flush();
        if (!out) throw Error("failed writing '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        throw Error("cannot move output into place at '" + path + "': " + ec.message());
    }
}

ModelDocument load_model_file(const std::string& path) {
    const std::string text = read_text_file(path);
    if (path.size() >= 6 && path.substr(path.size() - 6) == ".pomdp") return ModelDocument{parse_cassandra(text), {}, {}};
    return parse_native(text);
}

namespace {

void write_rule(std::ostringstream& out, const DecisionRule& rule) {
    for (Index z = 0; z < rule.n_agent_states(); ++z) {
        if (rule.is_deterministic()) {
            out << z << " -> " << rule.action(z) << '\n';
        } else {
            out << z << " :";
            for (Index a = 0; a < rule.n_actions(); ++a) out << ' ' << fmt(rule.prob(z, a));
            out << '\n';
        }
    }
}

}  // namespace

std::string serialize_policy(const Policy& policy, const AgentStateMachine& machine) {
    if (policy.n_agent_states() != machine.n_agent_states())
        throw ContractError("policy and machine disagree on the number of agent states");
    std::ostringstream out;
    out << "[policy]\nkind = " << (policy.is_stationary() ? "stationary" : "nonstationary") << '\n';
    if (!machine.label().empty()) {
        if (!is_name(machine.label())) throw ContractError("machine label '" + machine.label() + "' is not a valid name");
        out << "machine = " << machine.label() << '\n';
    }
    out << "agent_states = " << policy.n_agent_states() << "\nactions = " << policy.n_actions() << '\n';
    if (!policy.is_stationary()) out << "horizon = " << policy.rules().size() << '\n';
    for (Index t = 0; t < policy.rules().size(); ++t) {
        out << "\n[rule " << t + 1 << "]\n";
        write_rule(out, policy.rules()[t]);
    }
    out << "\n[rule tail]\n";
    write_rule(out, policy.tail());
    return out.str();
}

ParsedPolicy parse_policy(std::string_view text) {
    const auto lines = split_lines(text);
    std::optional<std::string> kind;
    std::string machine;
    std::optional<Index> Z, A, H;
    // Rule blocks in order of appearance; index 0 is unused, H + 1 is the tail.
    std::map<Index, std::vector<std::pair<Line, bool>>> blocks;
    std::optional<Index> current;
    bool in_policy = false;
    std::optional<Token> tail_header;

    for (const auto& line : lines) {
        const Token& head = line.tokens.front();
        if (head.text.front() == '[') {
            std::string header(trim(line.text));
            if (header.back() != ']') fail(head, "section header must end with ']'");
            std::istringstream hs(header.substr(1, header.size() - 2));
            std::string word, which, extra;
            hs >> word >> which >> extra;
            if (!extra.empty()) fail(head, "unexpected text in section header");
            if (word == "policy" && which.empty()) {
                in_policy = true;
                current.reset();
                continue;
            }
            if (word != "rule") fail(head, "unknown section [" + word + "]");
            if (!Z || !A || !kind) fail(head, "[policy] must define kind, agent_states and actions first");
            in_policy = false;
            Index idx;
            if (which == "tail") {
                idx = static_cast<Index>(-1);
                tail_header = head;
            } else {
                const Token wt{which, line.number, head.column + 6};
                idx = need_index(wt, static_cast<Index>(-1), "rule");
                if (idx == 0) fail(wt, "rules are numbered from 1");
            }
            if (blocks.count(idx)) fail(head, "duplicate rule section");
            blocks[idx];
            current = idx;
            continue;
        }
        if (in_policy) {
            const auto [key, value] = key_value(line);
            if (line.tokens.size() != 3) fail(key, "expected a single value");
            const Token& vt = line.tokens[2];
            if (key.text == "kind") {
                if (vt.text != "stationary" && vt.text != "nonstationary") fail(vt, "unknown policy kind");
                kind = std::string(vt.text);
            } else if (key.text == "machine") {
                machine = value;
            } else if (key.text == "agent_states") {
                Z = need_index(vt, static_cast<Index>(-1), "count");
            } else if (key.text == "actions") {
                A = need_index(vt, static_cast<Index>(-1), "count");
            } else if (key.text == "horizon") {
                H = need_index(vt, static_cast<Index>(-1), "count");
            } else {
                fail(key, "unknown [policy] key '" + std::string(key.text) + "'");
            }
            continue;
        }
        if (!current) fail(head, "content outside a section");
        const bool det = line.tokens.size() == 3 && line.tokens[1].text == "->";
        blocks[*current].emplace_back(line, det);
    }

    const Token eof{"", lines.empty() ? 1 : lines.back().number, 1};
    if (!kind || !Z || !A) fail(eof, "[policy] must define kind, agent_states and actions");
    if (*Z == 0 || *A == 0) fail(eof, "agent_states and actions must be positive");
    if (*kind == "stationary" && H) fail(eof, "stationary policies take no horizon");
    if (*kind == "nonstationary" && (!H || *H == 0)) fail(eof, "non-stationary policies need a positive horizon");
    if (!tail_header) fail(eof, "missing [rule tail]");

    auto build = [&](const std::vector<std::pair<Line, bool>>& rows, const Token& where) {
        if (rows.size() != *Z) fail(where, "rule must list every agent state exactly once");
        const bool det = rows.front().second;
        std::vector<Index> actions(*Z);
        std::vector<double> probs(*Z * *A);
        std::vector<char> seen(*Z, 0);
        for (const auto& [line, row_det] : rows) {
            const auto& t = line.tokens;
            if (row_det != det) fail(t.front(), "a rule is either deterministic or stochastic in every row");
            const Index z = need_index(t[0], *Z, "agent state");
            if (seen[z]) fail(t[0], "duplicate agent state in rule");
            seen[z] = 1;
            if (det) {
                actions[z] = need_index(t[2], *A, "action");
            } else {
                if (t.size() != *A + 2 || t[1].text != ":") fail(t.front(), "expected 'z : p_0 ... p_{A-1}' or 'z -> a'");
                for (Index a = 0; a < *A; ++a) probs[z * *A + a] = need_double(t[a + 2]);
            }
        }
        if (det) return DecisionRule::deterministic(std::move(actions), *A);
        try {
            return DecisionRule::stochastic(std::move(probs), *Z, *A);
        } catch (const Error& e) {
            fail(where, e.what());
        }
    };

    std::vector<DecisionRule> rules;
    const Index horizon = H.value_or(0);
    for (const auto& [idx, rows] : blocks) {
        if (idx == static_cast<Index>(-1)) continue;
        if (idx > horizon) fail(eof, "rule " + std::to_string(idx) + " beyond the horizon");
    }
    for (Index t = 1; t <= horizon; ++t) {
        auto it = blocks.find(t);
        if (it == blocks.end()) fail(eof, "missing [rule " + std::to_string(t) + "]");
        const Token where = it->second.empty() ? eof : it->second.front().first.tokens.front();
        rules.push_back(build(it->second, where));
    }
    DecisionRule tail = build(blocks[static_cast<Index>(-1)], *tail_header);
    ParsedPolicy out{*kind == "stationary" ? Policy::stationary(std::move(tail))
                                          : Policy::non_stationary(std::move(rules), std::move(tail)),
                     machine};
    return out;
}

std::string serialize_ais(const AisModel& ais) {
    ais.validate();
    const Index Z = ais.n_agent_states, A = ais.n_actions;
    std::ostringstream out;
    out << "[ais]\nagent_states = " << Z << "\nactions = " << A << "\n\n[transition]\n";
    for (Index z = 0; z < Z; ++z)
        for (Index a = 0; a < A; ++a)
            for (Index zn = 0; zn < Z; ++zn)
                if (ais.p(z, a, zn) != 0.0) out << z << ' ' << a << " -> " << zn << ' ' << fmt(ais.p(z, a, zn)) << '\n';
    out << "\n[reward]\n";
    for (Index z = 0; z < Z; ++z)
        for (Index a = 0; a < A; ++a) out << z << ' ' << a << ' ' << fmt(ais.r(z, a)) << '\n';
    if (ais.any_unvisited()) {
        out << "\n[unvisited]\n";
        for (Index i = 0; i < ais.unvisited.size(); ++i)
            if (ais.unvisited[i]) out << i / A << ' ' << i % A << '\n';
    }
    return out.str();
}

AisModel parse_ais(std::string_view text) {
    const auto lines = split_lines(text);
    AisModel ais;
    std::optional<Index> Z, A;
    std::string section;
    std::vector<char> r_set, p_set;
    auto ready = [&](const Token& at) {
        if (!Z || !A || *Z == 0 || *A == 0) fail(at, "[ais] must define positive agent_states and actions first");
        if (ais.p_ais.empty()) {
            ais.n_agent_states = *Z;
            ais.n_actions = *A;
            ais.p_ais.assign(*Z * *A * *Z, 0.0);
            ais.r_ais.assign(*Z * *A, 0.0);
            ais.unvisited.assign(*Z * *A, false);
            r_set.assign(*Z * *A, 0);
            p_set.assign(ais.p_ais.size(), 0);
        }
    };
    for (const auto& line : lines) {
        const auto& t = line.tokens;
        const Token& head = t.front();
        if (head.text.front() == '[') {
            section = std::string(trim(line.text));
            if (section != "[ais]" && section != "[transition]" && section != "[reward]" && section != "[unvisited]")
                fail(head, "unknown section " + section);
            if (section != "[ais]") ready(head);
            continue;
        }
        if (section == "[ais]") {
            const auto [key, value] = key_value(line);
            if (t.size() != 3) fail(key, "expected a single value");
            if (key.text == "agent_states") Z = need_index(t[2], static_cast<Index>(-1), "count");
            else if (key.text == "actions") A = need_index(t[2], static_cast<Index>(-1), "count");
            else fail(key, "unknown [ais] key");
        } else if (section == "[transition]") {
            if (t.size() != 5 || t[2].text != "->") fail(head, "transition rows read 'z a -> z' p'");
            const Index z = need_index(t[0], *Z, "agent state"), a = need_index(t[1], *A, "action");
            const Index zn = need_index(t[3], *Z, "agent state");
            const Index k = (z * *A + a) * *Z + zn;
            if (p_set[k]) fail(head, "duplicate transition entry");
            p_set[k] = 1;
            ais.p_ais[k] = need_double(t[4]);
            if (ais.p_ais[k] < 0.0) fail(t[4], "probabilities must be nonnegative");
        } else if (section == "[reward]") {
            if (t.size() != 3) fail(head, "reward rows read 'z a r'");
            const Index z = need_index(t[0], *Z, "agent state"), a = need_index(t[1], *A, "action");
            if (r_set[z * *A + a]) fail(head, "duplicate reward entry");
            r_set[z * *A + a] = 1;
            ais.r_ais[z * *A + a] = need_double(t[2]);
        } else if (section == "[unvisited]") {
            if (t.size() != 2) fail(head, "unvisited rows read 'z a'");
            ais.unvisited[need_index(t[0], *Z, "agent state") * *A + need_index(t[1], *A, "action")] = true;
        } else {
            fail(head, "content outside a section");
        }
    }
    const Token eof{"", lines.empty() ? 1 : lines.back().number, 1};
    ready(eof);
    for (Index i = 0; i < *Z * *A; ++i) {
        if (!r_set[i]) fail(eof, "missing AIS reward for cell " + std::to_string(i));
        if (!normalise_row(ais.p_ais.data() + i * *Z, *Z))
            fail(eof, "AIS transition row " + std::to_string(i) + " does not sum to 1");
    }
    return ais;
}

// ---------------------------------------------------------------------------------------------
// Classic .pomdp reader

namespace {

class CassandraLexer {
public:
    explicit CassandraLexer(std::string_view text) {
        std::size_t line = 1, col = 1, i = 0;
        while (i < text.size()) {
            const char c = text[i];
            if (c == '#') {
                while (i < text.size() && text[i] != '\n') ++i;
                continue;
            }
            if (c == '\n') {
                ++line;
                col = 1;
                ++i;
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++i;
                ++col;
                continue;
            }
            if (c == ':') {
                tokens_.push_back({text.substr(i, 1), line, col});
                ++i;
                ++col;
                continue;
            }
            const std::size_t start = i, start_col = col;
            while (i < text.size() && text[i] != ':' && text[i] != '#' &&
                   !std::isspace(static_cast<unsigned char>(text[i]))) {
                ++i;
                ++col;
            }
            tokens_.push_back({text.substr(start, i - start), line, start_col});
        }
        end_ = {"", line, col};
    }

    bool done() const { return pos_ >= tokens_.size(); }
    const Token& peek(std::size_t ahead = 0) const { return pos_ + ahead < tokens_.size() ? tokens_[pos_ + ahead] : end_; }
    const Token& next() {
        if (done()) fail(end_, "unexpected end of file");
        return tokens_[pos_++];
    }
    void expect_colon() {
        const Token& t = next();
        if (t.text != ":") fail(t, "expected ':'");
    }
    const Token& end() const { return end_; }

private:
    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    Token end_{"", 1, 1};
};

bool is_keyword(std::string_view s) {
    return s == "discount" || s == "values" || s == "states" || s == "actions" || s == "observations" ||
           s == "start" || s == "T" || s == "O" || s == "R" || s == "E";
}

struct Alphabet {
    Index size = 0;
    std::vector<std::string> names;

    /// Indices selected by a token: '*' is every index.
    std::vector<Index> select(const Token& t, const char* what) const {
        if (t.text == "*") {
            std::vector<Index> all(size);
            for (Index i = 0; i < size; ++i) all[i] = i;
            return all;
        }
        for (Index i = 0; i < names.size(); ++i)
            if (names[i] == t.text) return {i};
        if (auto v = to_index(t.text); v && *v < size) return {*v};
        fail(t, std::string("unknown ") + what + " '" + std::string(t.text) + "'");
    }
};

}  // namespace

PomdpModel parse_cassandra(std::string_view text) {
    CassandraLexer lex(text);
    std::optional<double> discount;
    std::optional<Alphabet> states, actions, observations;
    std::optional<std::vector<double>> start;
    std::vector<double> T, O, R;  // T[(a*S+s)*S+s'], O[(a*S+s')*Y+y], R[((a*S+s)*S+s')*Y+y]
    bool tables_ready = false;

    auto read_alphabet = [&]() {
        Alphabet alpha;
        const Token& first = lex.next();
        if (auto n = to_index(first.text)) {
            if (*n == 0) fail(first, "alphabet size must be positive");
            alpha.size = *n;
            return alpha;
        }
        alpha.names.emplace_back(first.text);
        while (!lex.done() && !(is_keyword(lex.peek().text) && lex.peek(1).text == ":")) alpha.names.emplace_back(lex.next().text);
        alpha.size = alpha.names.size();
        return alpha;
    };
    auto ensure_tables = [&](const Token& at) {
        if (tables_ready) return;
        if (!states || !actions || !observations) fail(at, "states, actions and observations must precede T, O and R");
        const Index S = states->size, A = actions->size, Y = observations->size;
        T.assign(A * S * S, 0.0);
        O.assign(A * S * Y, 0.0);
        R.assign(A * S * S * Y, 0.0);
        tables_ready = true;
    };
    auto read_numbers = [&](Index n) {
        std::vector<double> v(n);
        for (Index i = 0; i < n; ++i) v[i] = need_double(lex.next());
        return v;
    };

    while (!lex.done()) {
        const Token kw = lex.next();
        if (kw.text == "discount") {
            lex.expect_colon();
            discount = need_double(lex.next());
        } else if (kw.text == "values") {
            lex.expect_colon();
            const Token& v = lex.next();
            if (v.text == "cost") throw UnsupportedFeatureError("values: cost");
            if (v.text != "reward") fail(v, "values must be 'reward'");
        } else if (kw.text == "states") {
            lex.expect_colon();
            states = read_alphabet();
        } else if (kw.text == "actions") {
            lex.expect_colon();
            actions = read_alphabet();
        } else if (kw.text == "observations") {
            lex.expect_colon();
            observations = read_alphabet();
        } else if (kw.text == "start") {
            if (lex.peek().text == "include" || lex.peek().text == "exclude")
                throw UnsupportedFeatureError("start " + std::string(lex.peek().text));
            lex.expect_colon();
            if (!states) fail(kw, "states must precede start");
            const Token& first = lex.peek();
            if (first.text == "uniform") {
                lex.next();
                start = std::vector<double>(states->size, 1.0 / static_cast<double>(states->size));
            } else if (to_double(first.text) && !(states->names.empty() && states->size == 1 && false)) {
                // A number starts a probability vector unless the alphabet is named and the token is a name.
                start = read_numbers(states->size);
            } else {
                const auto idx = states->select(lex.next(), "state");
                start = std::vector<double>(states->size, 0.0);
                (*start)[idx.front()] = 1.0;
            }
        } else if (kw.text == "T" || kw.text == "O" || kw.text == "R") {
            lex.expect_colon();
            ensure_tables(kw);
            const Index S = states->size, Y = observations->size;
            const auto as = actions->select(lex.next(), "action");
            if (kw.text == "T") {
                if (lex.peek().text != ":") {
                    const Token& t = lex.peek();
                    std::vector<double> m(S * S, 0.0);
                    if (t.text == "uniform") {
                        lex.next();
                        std::fill(m.begin(), m.end(), 1.0 / static_cast<double>(S));
                    } else if (t.text == "identity") {
                        lex.next();
                        for (Index s = 0; s < S; ++s) m[s * S + s] = 1.0;
                    } else {
                        m = read_numbers(S * S);
                    }
                    for (Index a : as) std::copy(m.begin(), m.end(), T.begin() + a * S * S);
                    continue;
                }
                lex.expect_colon();
                const auto ss = states->select(lex.next(), "state");
                if (lex.peek().text != ":") {
                    std::vector<double> row(S);
                    if (lex.peek().text == "uniform") {
                        lex.next();
                        std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(S));
                    } else {
                        row = read_numbers(S);
                    }
                    for (Index a : as)
                        for (Index s : ss) std::copy(row.begin(), row.end(), T.begin() + (a * S + s) * S);
                    continue;
                }
                lex.expect_colon();
                const auto ns = states->select(lex.next(), "state");
                const double p = need_double(lex.next());
                for (Index a : as)
                    for (Index s : ss)
                        for (Index sn : ns) T[(a * S + s) * S + sn] = p;
            } else if (kw.text == "O") {
                if (lex.peek().text != ":") {
                    const Token& t = lex.peek();
                    std::vector<double> m(S * Y, 0.0);
                    if (t.text == "uniform") {
                        lex.next();
                        std::fill(m.begin(), m.end(), 1.0 / static_cast<double>(Y));
                    } else if (t.text == "identity") {
                        if (S != Y) fail(t, "identity observation matrix needs as many observations as states");
                        lex.next();
                        for (Index s = 0; s < S; ++s) m[s * Y + s] = 1.0;
                    } else {
                        m = read_numbers(S * Y);
                    }
                    for (Index a : as) std::copy(m.begin(), m.end(), O.begin() + a * S * Y);
                    continue;
                }
                lex.expect_colon();
                const auto ns = states->select(lex.next(), "state");
                if (lex.peek().text != ":") {
                    std::vector<double> row(Y);
                    if (lex.peek().text == "uniform") {
                        lex.next();
                        std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(Y));
                    } else {
                        row = read_numbers(Y);
                    }
                    for (Index a : as)
                        for (Index sn : ns) std::copy(row.begin(), row.end(), O.begin() + (a * S + sn) * Y);
                    continue;
                }
                lex.expect_colon();
                const auto ys = observations->select(lex.next(), "observation");
                const double p = need_double(lex.next());
                for (Index a : as)
                    for (Index sn : ns)
                        for (Index y : ys) O[(a * S + sn) * Y + y] = p;
            } else {
                lex.expect_colon();
                const auto ss = states->select(lex.next(), "state");
                if (lex.peek().text != ":") {
                    const auto m = read_numbers(S * Y);
                    for (Index a : as)
                        for (Index s : ss) std::copy(m.begin(), m.end(), R.begin() + (a * S + s) * S * Y);
                    continue;
                }
                lex.expect_colon();
                const auto ns = states->select(lex.next(), "state");
                if (lex.peek().text != ":") {
                    const auto row = read_numbers(Y);
                    for (Index a : as)
                        for (Index s : ss)
                            for (Index sn : ns) std::copy(row.begin(), row.end(), R.begin() + ((a * S + s) * S + sn) * Y);
                    continue;
                }
                lex.expect_colon();
                const auto ys = observations->select(lex.next(), "observation");
                const double v = need_double(lex.next());
                for (Index a : as)
                    for (Index s : ss)
                        for (Index sn : ns)
                            for (Index y : ys) R[((a * S + s) * S + sn) * Y + y] = v;
            }
        } else if (kw.text == "E") {
            throw UnsupportedFeatureError("E: (terminal states)");
        } else {
            fail(kw, "unexpected token '" + std::string(kw.text) + "'");
        }
    }

    if (!discount) fail(lex.end(), "missing 'discount:'");
    if (!states || !actions || !observations) fail(lex.end(), "states, actions and observations are required");
    ensure_tables(lex.end());
    const Index S = states->size, A = actions->size, Y = observations->size;
    for (Index a = 0; a < A; ++a)
        for (Index s = 0; s < S; ++s) {
            if (!normalise_row(T.data() + (a * S + s) * S, S))
                fail(lex.end(), "T row for action " + std::to_string(a) + ", state " + std::to_string(s) + " does not sum to 1");
            if (!normalise_row(O.data() + (a * S + s) * Y, Y))
                fail(lex.end(), "O row for action " + std::to_string(a) + ", state " + std::to_string(s) + " does not sum to 1");
        }
    if (!start) start = std::vector<double>(S, 1.0 / static_cast<double>(S));
    if (!normalise_row(start->data(), S)) fail(lex.end(), "start distribution does not sum to 1");

    ModelData d;
    d.n_states = S;
    d.n_actions = A;
    d.n_obs = Y;
    d.gamma = *discount;
    d.kernel.assign(S * A * S * Y, 0.0);
    d.reward.assign(S * A, 0.0);
    for (Index s = 0; s < S; ++s)
        for (Index a = 0; a < A; ++a) {
            double r = 0.0;
            for (Index sn = 0; sn < S; ++sn) {
                const double t = T[(a * S + s) * S + sn];
                for (Index y = 0; y < Y; ++y) {
                    const double p = t * O[(a * S + sn) * Y + y];
                    d.kernel[((s * A + a) * S + sn) * Y + y] = p;
                    r += p * R[((a * S + s) * S + sn) * Y + y];
                }
            }
            d.reward[s * A + a] = r;
        }
    d.init_state = std::move(*start);
    return PomdpModel(std::move(d));
}

FactoredKernel factor_kernel(const PomdpModel& model) {
    const Index S = model.n_states(), A = model.n_actions(), Y = model.n_obs();
    FactoredKernel f;
    f.transition.assign(S * A * S, 0.0);
    f.observation.assign(A * S * Y, 0.0);
    for (Index a = 0; a < A; ++a) {
        std::vector<double> mass(S, 0.0);
        for (Index s = 0; s < S; ++s)
            for (Index sn = 0; sn < S; ++sn)
                for (Index y = 0; y < Y; ++y) {
                    const double p = model.kernel(s, a, sn, y);
                    f.transition[(s * A + a) * S + sn] += p;
                    f.observation[(a * S + sn) * Y + y] += p;
                    mass[sn] += p;
                }
        for (Index sn = 0; sn < S; ++sn)
            for (Index y = 0; y < Y; ++y) {
                double& o = f.observation[(a * S + sn) * Y + y];
                o = mass[sn] > 0.0 ? o / mass[sn] : 1.0 / static_cast<double>(Y);
            }
    }
    return f;
}

}  // namespace agentpomdp
