#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "kolambert/errors.hpp"
#include "kolambert/scenario.hpp"
#include "kolambert/version.hpp"

namespace kolambert {

// Deterministic CSV output: '#'-prefixed provenance comments, a header row,
// then rows with %.15g-formatted numbers. Identical configurations produce
// byte-identical files.

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::string provenance_line(std::uint64_t config_key, std::uint64_t model_key) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx model=%016llx",
                  static_cast<unsigned long long>(config_key),
                  static_cast<unsigned long long>(model_key));
    return std::string("# kolambert ") + kVersion + " config=" + buf;
}

// Trajectory samples from the numeric propagator as a CSV table
// (t, x, y, z, vx, vy, vz).
template <typename Samples>
CsvTable samples_to_csv_table(const Samples& samples) {
    CsvTable table;
    table.header = {"t_s", "x_km", "y_km", "z_km", "vx_km_s", "vy_km_s", "vz_km_s"};
    for (const auto& s : samples) {
        table.rows.push_back({format_double(s.t), format_double(s.state.position.x()),
                              format_double(s.state.position.y()),
                              format_double(s.state.position.z()),
                              format_double(s.state.velocity.x()),
                              format_double(s.state.velocity.y()),
                              format_double(s.state.velocity.z())});
    }
    return table;
}

inline void write_csv(const std::string& path, const CsvTable& table,
                      const std::string& provenance) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out << provenance << "\n";
    for (std::size_t i = 0; i < table.header.size(); ++i) {
        if (i) out << ",";
        out << table.header[i];
    }
    out << "\n";
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out << ",";
            out << row[i];
        }
        out << "\n";
    }
    if (!out) throw Error("write failed for " + path);
}

}  // namespace kolambert
