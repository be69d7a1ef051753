#pragma once

#include "radner/grid_function.hpp"

#include <string>
#include <vector>

#include <json.hpp>

namespace radner {

// Numbers are written with %.17g so that every artifact round-trips exactly.
std::string format_number(double v);

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row);
    void add_numbers(const std::vector<double>& row);
    std::size_t rows() const { return rows_.size(); }
    std::string str() const;
    void write(const std::string& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// Columns t, x0, ..., <value_name>. Time slices are thinned to keep at most
// max_rows rows; the binary dump always holds every slice.
void write_surface_csv(const std::string& path, const GridFunction& f, const std::string& value_name = "value",
                       std::size_t max_rows = 250000);

// Binary layout, little endian: "RGRD", u32 version (1), u32 d,
// u64 nt, nt doubles (times), per axis {f64 lower, f64 upper, u64 points},
// then nt * nodes doubles in slice-major order.
void write_rgrd(const std::string& path, const GridFunction& f);
GridFunction read_rgrd(const std::string& path);

void write_json(const std::string& path, const nlohmann::json& j);
void write_text(const std::string& path, const std::string& text);

} // namespace radner
