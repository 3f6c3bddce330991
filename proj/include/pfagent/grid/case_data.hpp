#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace pfagent::grid {

struct BusRow {
    int idx = 0;
    std::string name;
    double vn = 1.0;
};

struct LineRow {
    std::string idx;
    int bus1 = 0;
    int bus2 = 0;
    double r = 0.0, x = 0.0, b = 0.0;
    double tap = 1.0;
    double phi = 0.0;  // rad
    double u = 1.0;
};

struct PQRow {
    std::string idx;
    int bus = 0;
    double p0 = 0.0, q0 = 0.0;
    double u = 1.0;
};

struct PVRow {
    std::string idx;
    int bus = 0;
    double p0 = 0.0, v0 = 1.0;
    double u = 1.0;
};

struct SlackRow {
    std::string idx;
    int bus = 0;
    double v0 = 1.0, a0 = 0.0;
    double u = 1.0;
};

struct ShuntRow {
    std::string idx;
    int bus = 0;
    double g = 0.0, b = 0.0;
    double u = 1.0;
};

/// In-memory copy of a backend case file. Per unit on `base_mva`.
struct CaseData {
    std::string name;
    double base_mva = 100.0;
    std::vector<BusRow> buses;
    std::vector<LineRow> lines;
    std::vector<PQRow> loads;
    std::vector<PVRow> pvs;
    std::vector<SlackRow> slacks;
    std::vector<ShuntRow> shunts;

    std::optional<std::size_t> bus_position(int bus) const;
    /// Lines (in service or not) joining the two buses, either direction.
    std::vector<std::size_t> lines_between(int a, int b) const;
    std::optional<std::size_t> line_position(const std::string& idx) const;
};

CaseData case_from_json(const nlohmann::json& doc);
nlohmann::json case_to_json(const CaseData& data);

/// Throws Error("CaseLoadFailure") on unreadable or malformed files.
CaseData load_case_file(const std::filesystem::path& path);
void save_case_file(const std::filesystem::path& path, const CaseData& data);

std::filesystem::path backend_dir();
std::filesystem::path builtin_case_path(const std::string& name);
std::vector<std::string> builtin_case_names();
CaseData load_builtin_case(const std::string& name);

/// Copy of `base` with every load multiplied by `load_factor`, the form in
/// which uploaded variants of the shipped cases are produced.
CaseData make_uploaded_variant(const CaseData& base, double load_factor);

}  // namespace pfagent::grid
