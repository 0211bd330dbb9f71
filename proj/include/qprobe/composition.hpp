#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace qprobe {

/// One G(n,p) block of a dataset, drawn `count` times.
struct EnsembleCell {
  int n = 0;
  double p = 0.0;
  int count = 0;

  friend bool operator==(const EnsembleCell&, const EnsembleCell&) = default;
};

/// Ordered list of cells; total size is the sum of counts.
struct EnsembleSpec {
  std::vector<EnsembleCell> cells;

  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& c : cells) t += static_cast<std::size_t>(c.count);
    return t;
  }

  friend bool operator==(const EnsembleSpec&, const EnsembleSpec&) = default;
};

/// (cell, index within cell) in round-robin order: one draw from every cell
/// that still has draws left, cell by cell, until all are exhausted.
struct DrawSlot {
  std::size_t cell = 0;
  int within = 0;
};

inline std::vector<DrawSlot> round_robin(const EnsembleSpec& spec) {
  std::vector<DrawSlot> order;
  order.reserve(spec.total());
  int rounds = 0;
  for (const auto& c : spec.cells) rounds = std::max(rounds, c.count);
  for (int r = 0; r < rounds; ++r)
    for (std::size_t c = 0; c < spec.cells.size(); ++c)
      if (r < spec.cells[c].count) order.push_back({c, r});
  return order;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      parts.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return parts;
}

template <class T>
T parse_number(std::string_view s, std::string_view context) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end || s.empty())
    throw ParseError("composition '" + std::string(context) + "': bad number '" + std::string(s) + "'");
  return value;
}

/// "50", "n=50", "n=20|40|60" -> list of values.
template <class T>
std::vector<T> parse_alternatives(std::string_view s, char key, std::string_view context) {
  s = trim(s);
  if (s.size() >= 2 && s[0] == key && s[1] == '=') s.remove_prefix(2);
  std::vector<T> out;
  for (auto part : split(s, '|')) out.push_back(parse_number<T>(part, context));
  return out;
}

}  // namespace detail

/// Parses the bracket-notation mini-language:
///   "150xG(50,0.6)"
///   "90xG(50,p=0.2|0.4|0.6|0.8)"      (one cell per p)
///   "90xG(n=20|40|60|80,0.5)"         (one cell per n)
///   "50xG(50,0.6) + 30xG(40,0.5)"     (explicit list)
inline EnsembleSpec parse_composition(std::string_view text) {
  EnsembleSpec spec;
  for (auto term : detail::split(text, '+')) {
    if (term.empty()) throw ParseError("composition '" + std::string(text) + "': empty term");
    const auto x = term.find('x');
    const auto open = term.find("G(");
    if (x == std::string_view::npos || open == std::string_view::npos || open < x || term.back() != ')')
      throw ParseError("composition '" + std::string(term) + "': expected <count>xG(<n>,<p>)");
    const int count = detail::parse_number<int>(detail::trim(term.substr(0, x)), term);
    if (count < 1) throw ParseError("composition '" + std::string(term) + "': count must be positive");
    if (!detail::trim(term.substr(x + 1, open - x - 1)).empty())
      throw ParseError("composition '" + std::string(term) + "': unexpected text before G(");
    const auto inner = term.substr(open + 2, term.size() - open - 3);
    const auto args = detail::split(inner, ',');
    if (args.size() != 2) throw ParseError("composition '" + std::string(term) + "': G() takes two arguments");
    const auto ns = detail::parse_alternatives<int>(args[0], 'n', term);
    const auto ps = detail::parse_alternatives<double>(args[1], 'p', term);
    if (ns.size() > 1 && ps.size() > 1)
      throw ParseError("composition '" + std::string(term) + "': vary either n or p, not both");
    for (int n : ns)
      for (double p : ps) {
        if (n < 2) throw ParseError("composition '" + std::string(term) + "': n must be >= 2");
        if (!(p > 0.0 && p < 1.0)) throw ParseError("composition '" + std::string(term) + "': p must lie in (0,1)");
        spec.cells.push_back({n, p, count});
      }
  }
  return spec;
}

/// Inverse of parse_composition, one explicit term per cell.
inline std::string to_string(const EnsembleSpec& spec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spec.cells.size(); ++i) {
    if (i) os << " + ";
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, spec.cells[i].p);
    os << spec.cells[i].count << "xG(" << spec.cells[i].n << "," << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << ")";
  }
  return os.str();
}

}  // namespace qprobe
