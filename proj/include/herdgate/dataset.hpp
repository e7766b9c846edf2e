#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "herdgate/error.hpp"

namespace herdgate {

enum class ColumnKind { numeric, categorical };

// One feature column with an explicit presence mask; missing values are never
// encoded as sentinel numbers.
struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::vector<double> num;              // numeric values, size n_rows when numeric
    std::vector<std::int32_t> cat;        // category codes, size n_rows when categorical
    std::vector<std::string> labels;      // category label per code
    std::vector<std::uint8_t> present;    // 0 = missing

    std::size_t size() const { return present.size(); }

    std::int32_t code_of(std::string_view label) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) return static_cast<std::int32_t>(i);
        return -1;
    }

    std::int32_t intern(std::string_view label) {
        std::int32_t c = code_of(label);
        if (c >= 0) return c;
        labels.emplace_back(label);
        return static_cast<std::int32_t>(labels.size() - 1);
    }
};

struct DataMatrix {
    std::size_t n_rows = 0;
    std::vector<Column> cols;

    const Column* find(std::string_view name) const {
        for (const auto& c : cols)
            if (c.name == name) return &c;
        return nullptr;
    }

    Column* find(std::string_view name) {
        for (auto& c : cols)
            if (c.name == name) return &c;
        return nullptr;
    }

    void validate() const {
        for (const auto& c : cols) {
            require(c.present.size() == n_rows, "column '" + c.name + "': bad presence size");
            if (c.kind == ColumnKind::numeric)
                require(c.num.size() == n_rows, "column '" + c.name + "': bad value size");
            else
                require(c.cat.size() == n_rows, "column '" + c.name + "': bad code size");
        }
    }
};

} // namespace herdgate
