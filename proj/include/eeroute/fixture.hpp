#pragma once

// Architecture fixture files: a [backbone] section followed by optional
// [branch.k] sections, each holding one module per line as
// in,out,h,w,kernel,convs. '#' starts a comment.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "eeroute/cost_model.hpp"

namespace eeroute {

class fixture_error : public std::runtime_error {
public:
  fixture_error(const std::string& what, int line)
      : std::runtime_error("fixture line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

namespace detail {

inline std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline ModuleSpec parse_module_row(const std::string& row, int line_no) {
  std::vector<int> fields;
  std::stringstream ss(row);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = strip(tok);
    int v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size())
      throw fixture_error("bad integer '" + tok + "'", line_no);
    fields.push_back(v);
  }
  if (fields.size() != 6)
    throw fixture_error("expected 6 fields in,out,h,w,kernel,convs", line_no);
  ModuleSpec m{fields[0], fields[1], fields[2], fields[3], fields[4], fields[5]};
  try {
    validate(m);
  } catch (const std::invalid_argument& e) {
    throw fixture_error(e.what(), line_no);
  }
  return m;
}

}  // namespace detail

inline RouteGraph parse_fixture(std::istream& in) {
  RouteGraph g;
  std::vector<ModuleSpec>* current = nullptr;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = detail::strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw fixture_error("unterminated section header", line_no);
      std::string name = line.substr(1, line.size() - 2);
      if (name == "backbone") {
        current = &g.backbone;
      } else if (name.rfind("branch.", 0) == 0) {
        int k = 0;
        std::string idx = name.substr(7);
        auto [p, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), k);
        if (ec != std::errc{} || p != idx.data() + idx.size() || k < 1)
          throw fixture_error("bad branch attach index '" + idx + "'", line_no);
        g.branches.push_back(Branch{k, {}});
        current = &g.branches.back().modules;
      } else {
        throw fixture_error("unknown section [" + name + "]", line_no);
      }
      continue;
    }
    if (!current) throw fixture_error("module row outside any section", line_no);
    current->push_back(detail::parse_module_row(line, line_no));
  }
  validate(g);
  return g;
}

inline RouteGraph load_fixture(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open fixture file: " + path);
  return parse_fixture(f);
}

/// Rebuilds every branch of the fixture from its attach point under the given
/// policy, keeping the backbone as-is. Used by the cost table: the fixture's
/// stored branch schedules represent one particular scale factor, while the
/// table spans several.
inline RouteGraph apply_scale_policy(const RouteGraph& g, const ScalePolicy& policy) {
  RouteGraph out;
  out.backbone = g.backbone;
  for (const auto& b : g.branches)
    out.branches.push_back(Branch{b.attach_index,
                                  build_branch_schedule(g.backbone, b.attach_index, policy)});
  validate(out);
  return out;
}

}  // namespace eeroute
