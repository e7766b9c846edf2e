#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <tuple>

#include "herdgate/error.hpp"

namespace herdgate {

// Calendar date backed by a day count since 1970-01-01.  All arithmetic is in
// whole days; there are no time zones anywhere in the artifact.
class Date {
public:
    Date() = default;
    explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

    static Date from_ymd(int y, int m, int d) {
        require(m >= 1 && m <= 12, "month out of range");
        require(d >= 1 && d <= days_in_month(y, m), "day out of range");
        return Date(days_from_civil(y, m, d));
    }

    // Strict ISO-8601 calendar date, YYYY-MM-DD.
    static Date parse(std::string_view s) {
        require(s.size() == 10 && s[4] == '-' && s[7] == '-',
                "bad date '" + std::string(s) + "' (expected YYYY-MM-DD)");
        auto num = [&](std::size_t pos, std::size_t len) {
            int v = 0;
            auto [p, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
            require(ec == std::errc() && p == s.data() + pos + len,
                    "bad date '" + std::string(s) + "'");
            return v;
        };
        return from_ymd(num(0, 4), num(5, 2), num(8, 2));
    }

    std::string to_string() const {
        auto [y, m, d] = civil_from_days(days_);
        char buf[11];
        auto two = [](char* out, int v) {
            out[0] = static_cast<char>('0' + v / 10);
            out[1] = static_cast<char>('0' + v % 10);
        };
        buf[0] = static_cast<char>('0' + y / 1000);
        buf[1] = static_cast<char>('0' + (y / 100) % 10);
        buf[2] = static_cast<char>('0' + (y / 10) % 10);
        buf[3] = static_cast<char>('0' + y % 10);
        buf[4] = '-';
        two(buf + 5, m);
        buf[7] = '-';
        two(buf + 8, d);
        buf[10] = '\0';
        return std::string(buf);
    }

    std::int32_t days_since_epoch() const { return days_; }
    int year() const { return std::get<0>(civil_from_days(days_)); }
    int month() const { return std::get<1>(civil_from_days(days_)); }
    int day() const { return std::get<2>(civil_from_days(days_)); }

    Date operator+(int days) const { return Date(days_ + days); }
    Date operator-(int days) const { return Date(days_ - days); }
    int operator-(Date other) const { return days_ - other.days_; }

    auto operator<=>(const Date&) const = default;

    // Howard Hinnant's civil-day algorithms.
    static std::int32_t days_from_civil(int y, int m, int d) {
        y -= m <= 2;
        const int era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 +
                             static_cast<unsigned>(d) - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return era * 146097 + static_cast<std::int32_t>(doe) - 719468;
    }

    static std::tuple<int, int, int> civil_from_days(std::int32_t z) {
        z += 719468;
        const std::int32_t era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const int y = static_cast<int>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp + (mp < 10 ? 3 : -9);
        return {y + (m <= 2), static_cast<int>(m), static_cast<int>(d)};
    }

    static int days_in_month(int y, int m) {
        static constexpr int lens[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        if (m == 2 && (y % 4 == 0 && (y % 100 != 0 || y % 400 == 0))) return 29;
        return lens[m - 1];
    }

private:
    std::int32_t days_ = 0;
};

} // namespace herdgate
