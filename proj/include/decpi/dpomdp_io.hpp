#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "decpi/model.hpp"

namespace decpi {

namespace io_detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(':', start);
    if (pos == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

inline double parse_number(const std::string& tok, int line) {
  char* end = nullptr;
  double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw ParseError(line, "expected a number, got '" + tok + "'");
  return v;
}

inline std::optional<int> parse_index(const std::string& tok) {
  if (tok.empty()) return std::nullopt;
  for (char c : tok)
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
  return std::stoi(tok);
}

/// Resolves a token to the indices it denotes in a name list: a name, a
/// 0-based index, or '*' for all.
inline std::vector<int> resolve(const std::string& tok, const std::vector<std::string>& names,
                                const char* what, int line) {
  if (tok == "*") {
    std::vector<int> all(names.size());
    for (std::size_t i = 0; i < names.size(); ++i) all[i] = static_cast<int>(i);
    return all;
  }
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == tok) return {static_cast<int>(i)};
  if (auto idx = parse_index(tok); idx && *idx < static_cast<int>(names.size())) return {*idx};
  throw ParseError(line, std::string("unknown ") + what + " '" + tok + "'");
}

inline std::vector<std::string> numbered_names(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

/// Parses a name-list line that may instead be a single count.
inline std::vector<std::string> name_list(const std::string& body, const std::string& prefix,
                                          int line) {
  auto toks = tokens(body);
  if (toks.empty()) throw ParseError(line, "expected a count or a list of names");
  if (toks.size() == 1) {
    if (auto n = parse_index(toks[0])) {
      if (*n <= 0) throw ParseError(line, "count must be positive");
      return numbered_names(prefix, *n);
    }
  }
  return toks;
}

/// Expands an action field (|I| tokens or a bare '*') into joint action ids.
inline std::vector<int> expand_actions(const DecPomdp& m, const std::string& field, int line) {
  auto toks = tokens(field);
  if (toks.size() == 1 && toks[0] == "*") {
    std::vector<int> all(m.num_joint_actions());
    for (int i = 0; i < m.num_joint_actions(); ++i) all[i] = i;
    return all;
  }
  if (static_cast<int>(toks.size()) != m.num_agents)
    throw ParseError(line, "expected " + std::to_string(m.num_agents) +
                               " action tokens, got " + std::to_string(toks.size()));
  std::vector<std::vector<int>> per(m.num_agents);
  for (int i = 0; i < m.num_agents; ++i)
    per[i] = resolve(toks[i], m.action_names[i], "action", line);
  std::vector<int> out;
  std::vector<std::size_t> pick(m.num_agents, 0);
  while (true) {
    int ja = 0;
    for (int i = 0; i < m.num_agents; ++i)
      ja += per[i][pick[i]] * static_cast<int>(m.action_space.stride[i]);
    out.push_back(ja);
    int i = m.num_agents - 1;
    while (i >= 0 && ++pick[i] == per[i].size()) pick[i--] = 0;
    if (i < 0) break;
  }
  return out;
}

inline std::vector<int> expand_obs(const DecPomdp& m, const std::string& field, int line) {
  auto toks = tokens(field);
  if (toks.size() == 1 && toks[0] == "*") {
    std::vector<int> all(m.num_joint_obs());
    for (int i = 0; i < m.num_joint_obs(); ++i) all[i] = i;
    return all;
  }
  if (static_cast<int>(toks.size()) != m.num_agents)
    throw ParseError(line, "expected " + std::to_string(m.num_agents) +
                               " observation tokens, got " + std::to_string(toks.size()));
  std::vector<std::vector<int>> per(m.num_agents);
  for (int i = 0; i < m.num_agents; ++i)
    per[i] = resolve(toks[i], m.obs_names[i], "observation", line);
  std::vector<int> out;
  std::vector<std::size_t> pick(m.num_agents, 0);
  while (true) {
    int jo = 0;
    for (int i = 0; i < m.num_agents; ++i)
      jo += per[i][pick[i]] * static_cast<int>(m.obs_space.stride[i]);
    out.push_back(jo);
    int i = m.num_agents - 1;
    while (i >= 0 && ++pick[i] == per[i].size()) pick[i--] = 0;
    if (i < 0) break;
  }
  return out;
}

}  // namespace io_detail

/// Parses the text problem format (see docs/file-formats.md for the grammar).
/// The preamble must precede the first T/O/R line; unspecified table entries
/// default to zero and the finished model is validated before returning.
inline DecPomdp parse_dpomdp(const std::string& text) {
  using namespace io_detail;
  DecPomdp m;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  bool have_agents = false, have_discount = false, have_values = false, have_states = false,
       have_actions = false, have_obs = false, have_start = false, tables_ready = false;

  auto next_line = [&](std::string& out) -> bool {
    while (std::getline(in, raw)) {
      ++line;
      if (auto pos = raw.find('#'); pos != std::string::npos) raw.erase(pos);
      out = trim(raw);
      if (!out.empty()) return true;
    }
    return false;
  };

  auto require_preamble = [&]() {
    if (tables_ready) return;
    if (!(have_agents && have_discount && have_values && have_states && have_actions &&
          have_obs))
      throw ParseError(line, "table line before the preamble is complete");
    m.init_spaces();
    m.allocate_tables();
    tables_ready = true;
  };

  std::string s;
  while (next_line(s)) {
    auto fields = split_fields(s);
    const std::string& head = fields[0];
    if (head == "agents") {
      if (fields.size() != 2) throw ParseError(line, "agents: expects one count");
      auto n = parse_index(fields[1]);
      if (!n || *n < 1) throw ParseError(line, "agents: expects a positive count");
      m.num_agents = *n;
      have_agents = true;
    } else if (head == "discount") {
      if (fields.size() != 2) throw ParseError(line, "discount: expects one number");
      m.discount = parse_number(fields[1], line);
      have_discount = true;
    } else if (head == "values") {
      if (fields.size() != 2 || trim(fields[1]) != "reward")
        throw ParseError(line, "only 'values: reward' is supported");
      have_values = true;
    } else if (head == "states") {
      m.state_names = name_list(fields.size() > 1 ? fields[1] : "", "s", line);
      have_states = true;
    } else if (head == "actions" || head == "observations") {
      if (!have_agents) throw ParseError(line, head + ": requires agents: first");
      auto& dest = head == "actions" ? m.action_names : m.obs_names;
      dest.clear();
      std::string body;
      for (int i = 0; i < m.num_agents; ++i) {
        if (!next_line(body)) throw ParseError(line, head + ": missing per-agent line");
        dest.push_back(name_list(body, head == "actions" ? "a" : "o", line));
      }
      (head == "actions" ? have_actions : have_obs) = true;
    } else if (head == "start") {
      if (!have_states) throw ParseError(line, "start: requires states: first");
      auto toks = tokens(fields.size() > 1 ? fields[1] : "");
      const int S = static_cast<int>(m.state_names.size());
      m.initial_belief.assign(S, 0.0);
      if (toks.size() == 1 && toks[0] == "uniform") {
        m.initial_belief.assign(S, 1.0 / S);
      } else if (toks.size() == 1 && static_cast<int>(toks.size()) != S) {
        auto idx = resolve(toks[0], m.state_names, "state", line);
        if (idx.size() != 1) throw ParseError(line, "start: expects a single state");
        m.initial_belief[idx[0]] = 1.0;
      } else {
        if (static_cast<int>(toks.size()) != S)
          throw ParseError(line, "start: expects " + std::to_string(S) + " probabilities");
        for (int i = 0; i < S; ++i) m.initial_belief[i] = parse_number(toks[i], line);
      }
      have_start = true;
    } else if (head == "T") {
      require_preamble();
      auto actions = expand_actions(m, fields.size() > 1 ? fields[1] : "", line);
      if (fields.size() == 3 && trim(fields[2]) == "identity") {
        for (int ja : actions)
          for (int st = 0; st < m.num_states(); ++st)
            for (int s2 = 0; s2 < m.num_states(); ++s2)
              m.trans(ja, st, s2) = st == s2 ? 1.0 : 0.0;
      } else if (fields.size() == 4 && trim(fields[3]) == "uniform") {
        auto froms = resolve(fields[2], m.state_names, "state", line);
        double p = 1.0 / m.num_states();
        for (int ja : actions)
          for (int st : froms)
            for (int s2 = 0; s2 < m.num_states(); ++s2) m.trans(ja, st, s2) = p;
      } else if (fields.size() == 5) {
        auto froms = resolve(fields[2], m.state_names, "state", line);
        auto tos = resolve(fields[3], m.state_names, "state", line);
        double p = parse_number(fields[4], line);
        for (int ja : actions)
          for (int st : froms)
            for (int s2 : tos) m.trans(ja, st, s2) = p;
      } else {
        throw ParseError(line, "malformed T line");
      }
    } else if (head == "O") {
      require_preamble();
      auto actions = expand_actions(m, fields.size() > 1 ? fields[1] : "", line);
      if (fields.size() == 4 && trim(fields[3]) == "uniform") {
        auto tos = resolve(fields[2], m.state_names, "state", line);
        double p = 1.0 / m.num_joint_obs();
        for (int ja : actions)
          for (int s2 : tos)
            for (int jo = 0; jo < m.num_joint_obs(); ++jo) m.obs(ja, s2, jo) = p;
      } else if (fields.size() == 5) {
        auto tos = resolve(fields[2], m.state_names, "state", line);
        auto obs = expand_obs(m, fields[3], line);
        double p = parse_number(fields[4], line);
        for (int ja : actions)
          for (int s2 : tos)
            for (int jo : obs) m.obs(ja, s2, jo) = p;
      } else {
        throw ParseError(line, "malformed O line");
      }
    } else if (head == "R") {
      require_preamble();
      if (fields.size() != 6 || trim(fields[3]) != "*" || trim(fields[4]) != "*")
        throw ParseError(line,
                         "malformed R line (rewards are state-action: R: <a> : <s> : * : * : r)");
      auto actions = expand_actions(m, fields[1], line);
      auto froms = resolve(fields[2], m.state_names, "state", line);
      double r = parse_number(fields[5], line);
      for (int ja : actions)
        for (int st : froms) m.rew(ja, st) = r;
    } else {
      throw ParseError(line, "unrecognized line '" + s + "'");
    }
  }

  if (!have_start) throw ParseError(line, "missing start: line");
  require_preamble();
  try {
    m.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(e.what()) + " (after parsing)");
  }
  return m;
}

/// Serializes a model to the problem format; parse(serialize(m)) reproduces
/// every table entry exactly (probabilities are written with 17 significant
/// digits and omitted entries default to zero).
inline std::string serialize_dpomdp(const DecPomdp& m) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "# " << (m.name.empty() ? std::string("dec-pomdp") : m.name) << "\n";
  out << "agents: " << m.num_agents << "\n";
  out << "discount: " << num(m.discount) << "\n";
  out << "values: reward\n";
  out << "states:";
  for (const auto& n : m.state_names) out << ' ' << n;
  out << "\nactions:\n";
  for (const auto& agent : m.action_names) {
    for (std::size_t i = 0; i < agent.size(); ++i) out << (i ? " " : "") << agent[i];
    out << "\n";
  }
  out << "observations:\n";
  for (const auto& agent : m.obs_names) {
    for (std::size_t i = 0; i < agent.size(); ++i) out << (i ? " " : "") << agent[i];
    out << "\n";
  }
  out << "start:";
  for (double p : m.initial_belief) out << ' ' << num(p);
  out << "\n";
  for (int ja = 0; ja < m.num_joint_actions(); ++ja) {
    std::string alabel = m.joint_action_label(ja);
    for (int s = 0; s < m.num_states(); ++s)
      for (int s2 = 0; s2 < m.num_states(); ++s2)
        if (m.trans(ja, s, s2) != 0.0)
          out << "T: " << alabel << " : " << m.state_names[s] << " : " << m.state_names[s2]
              << " : " << num(m.trans(ja, s, s2)) << "\n";
  }
  std::vector<int> digits(m.num_agents);
  for (int ja = 0; ja < m.num_joint_actions(); ++ja) {
    std::string alabel = m.joint_action_label(ja);
    for (int s2 = 0; s2 < m.num_states(); ++s2) {
      for (int jo = 0; jo < m.num_joint_obs(); ++jo) {
        if (m.obs(ja, s2, jo) == 0.0) continue;
        out << "O: " << alabel << " : " << m.state_names[s2] << " :";
        for (int i = 0; i < m.num_agents; ++i) out << ' ' << m.obs_names[i][m.agent_obs(jo, i)];
        out << " : " << num(m.obs(ja, s2, jo)) << "\n";
      }
    }
  }
  for (int ja = 0; ja < m.num_joint_actions(); ++ja) {
    std::string alabel = m.joint_action_label(ja);
    for (int s = 0; s < m.num_states(); ++s)
      if (m.rew(ja, s) != 0.0)
        out << "R: " << alabel << " : " << m.state_names[s] << " : * : * : " << num(m.rew(ja, s))
            << "\n";
  }
  return out.str();
}

}  // namespace decpi
