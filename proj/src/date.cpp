#include "semgate/date.hpp"

#include <cctype>
#include <cstdio>

#include "semgate/errors.hpp"

namespace semgate {

Date::Date(std::chrono::year_month_day ymd) : ymd_(ymd) {
  if (!ymd_.ok()) {
    throw DomainError("date", "invalid calendar date");
  }
}

Date::Date(int year, unsigned month, unsigned day)
    : Date(std::chrono::year_month_day{std::chrono::year{year}, std::chrono::month{month},
                                       std::chrono::day{day}}) {}

Date Date::parse(std::string_view text) {
  const auto bad = [&] { return DomainError("date", "expected YYYY-MM-DD, got '" + std::string(text) + "'"); };
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw bad();
  }
  for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9}) {
    if (std::isdigit(static_cast<unsigned char>(text[i])) == 0) {
      throw bad();
    }
  }
  const auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
      v = v * 10 + (text[i] - '0');
    }
    return v;
  };
  const std::chrono::year_month_day ymd{std::chrono::year{num(0, 4)},
                                        std::chrono::month{static_cast<unsigned>(num(5, 2))},
                                        std::chrono::day{static_cast<unsigned>(num(8, 2))}};
  if (!ymd.ok()) {
    throw bad();
  }
  return Date{ymd};
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd_.year()),
                static_cast<unsigned>(ymd_.month()), static_cast<unsigned>(ymd_.day()));
  return buf;
}

}  // namespace semgate
