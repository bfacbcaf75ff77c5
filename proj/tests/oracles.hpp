#pragma once

// Independent reference computations and hand-rolled random generators for tests.
// Nothing here calls into the library's arithmetic.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

using hp = boost::multiprecision::cpp_bin_float_50;

enum class Gate { MarketOnly, Fsr, Dsr, Naive };

/// Gates written straight from their definitions, evaluated with 50 significant digits.
inline hp gated(Gate g, const hp& r, const hp& s, const hp& fsr_weight = 2) {
  switch (g) {
    case Gate::MarketOnly:
      return r;
    case Gate::Fsr:
      return r + fsr_weight * s;
    case Gate::Dsr:
      if (r > 0) return r * (hp(1) / 2 + s);
      return r * (2 - s);
    case Gate::Naive:
      return r * s;
  }
  return r;
}

/// Population-std advantages in high precision.
inline std::vector<hp> advantages(const std::vector<double>& g, double eps) {
  hp mean = 0;
  for (const double x : g) mean += hp(x);
  mean /= g.size();
  hp var = 0;
  for (const double x : g) var += (hp(x) - mean) * (hp(x) - mean);
  var /= g.size();
  const hp sd = boost::multiprecision::sqrt(var);
  std::vector<hp> out;
  for (const double x : g) out.push_back((hp(x) - mean) / (sd + hp(eps)));
  return out;
}

/// Overlap coefficient of two lowercase alphanumeric word sets, as a rational count.
inline double overlap_coefficient(const std::string& a, const std::string& b) {
  const auto bag = [](const std::string& s) {
    std::vector<std::string> w;
    std::string cur;
    for (const char ch : s + " ") {
      const auto c = static_cast<unsigned char>(ch);
      if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) {
        cur.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c));
      } else if (!cur.empty()) {
        w.push_back(cur);
        cur.clear();
      }
    }
    std::sort(w.begin(), w.end());
    w.erase(std::unique(w.begin(), w.end()), w.end());
    return w;
  };
  const auto x = bag(a);
  const auto y = bag(b);
  if (x.empty() || y.empty()) return 0.0;
  std::vector<std::string> both;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(std::min(x.size(), y.size()));
}

}  // namespace oracle

namespace gen {

/// Small seeded generator for property tests.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(engine_() >> 11) * 0x1.0p-53);
  }
  int integer(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  bool coin() { return (engine_() & 1U) != 0; }
  std::uint64_t bits() { return engine_(); }

  std::string ticker() {
    std::string t;
    const int n = integer(1, 5);
    for (int i = 0; i < n; ++i) t.push_back(static_cast<char>('A' + integer(0, 25)));
    if (coin()) t += "." + std::string(1, static_cast<char>('A' + integer(0, 25)));
    return t;
  }

  /// Printable text that may contain markup characters and multibyte UTF-8.
  std::string name() {
    static const std::vector<std::string> kPieces{"Acme", "Holdings", "&", "Co", "<Intl>", "Group",
                                                  "Tech", "Café", "Energy", "Ltd.", "S.A.", "\xe4\xb8\xad\xe5\x9b\xbd"};
    std::string s;
    const int n = integer(0, 4);
    for (int i = 0; i < n; ++i) {
      if (!s.empty()) s.push_back(' ');
      s += kPieces[static_cast<std::size_t>(integer(0, static_cast<int>(kPieces.size()) - 1))];
    }
    return s;
  }

  /// Random bytes biased toward tag syntax.
  std::string noise(std::size_t max_len) {
    static const std::vector<std::string> kTokens{
        "<", ">", "</", "<signals>", "</signals>", "<signal>", "</signal>", "<think>", "</think>",
        "<action>", "</action>", "buy", "sell", "<has_opportunity>", "</has_opportunity>", "yes", "no",
        "<symbol_code>", "</symbol_code>", "<symbol_name>", "</symbol_name", "&amp;", "&", "\n", " ",
        "<Output>", "</Output>", "WBTN", "\xff", "\xc3", "\x00"};
    std::string s;
    const auto len = static_cast<std::size_t>(integer(0, static_cast<int>(max_len)));
    while (s.size() < len) {
      if (coin()) {
        s += kTokens[static_cast<std::size_t>(integer(0, static_cast<int>(kTokens.size()) - 1))];
      } else {
        s.push_back(static_cast<char>(integer(0, 255)));
      }
    }
    return s;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gen

namespace fixture {

inline std::string read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace fixture
