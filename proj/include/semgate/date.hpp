#pragma once

#include <chrono>
#include <compare>
#include <string>
#include <string_view>

namespace semgate {

/// Calendar date (proleptic Gregorian), serialized as YYYY-MM-DD.
class Date {
 public:
  Date() = default;
  explicit Date(std::chrono::year_month_day ymd);
  Date(int year, unsigned month, unsigned day);

  /// Throws DomainError on anything that is not a valid YYYY-MM-DD date.
  static Date parse(std::string_view text);

  std::chrono::year_month_day ymd() const { return ymd_; }
  std::chrono::sys_days days() const { return std::chrono::sys_days{ymd_}; }
  std::string to_string() const;

  friend bool operator==(const Date& a, const Date& b) { return a.days() == b.days(); }
  friend std::strong_ordering operator<=>(const Date& a, const Date& b) {
    return a.days().time_since_epoch().count() <=> b.days().time_since_epoch().count();
  }

 private:
  std::chrono::year_month_day ymd_{std::chrono::year{1970}, std::chrono::month{1},
                                   std::chrono::day{1}};
};

}  // namespace semgate
