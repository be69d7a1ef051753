#include "radner/io.hpp"

#include "radner/error.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include <fmt/format.h>

namespace radner {

std::string format_number(double v) { return fmt::format("{:.17g}", v); }

void CsvTable::add(std::vector<std::string> row) {
    if (row.size() != header_.size())
        throw Error(fmt::format("CSV row has {} fields, header has {}", row.size(), header_.size()));
    rows_.push_back(std::move(row));
}

void CsvTable::add_numbers(const std::vector<double>& row) {
    std::vector<std::string> out;
    out.reserve(row.size());
    for (double v : row) out.push_back(format_number(v));
    add(std::move(out));
}

std::string CsvTable::str() const {
    std::string out = fmt::format("{}\n", fmt::join(header_, ","));
    for (const auto& r : rows_) out += fmt::format("{}\n", fmt::join(r, ","));
    return out;
}

void CsvTable::write(const std::string& path) const { write_text(path, str()); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(fmt::format("cannot write '{}'", path));
    f << text;
    if (!f) throw Error(fmt::format("write to '{}' failed", path));
}

void write_json(const std::string& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

void write_surface_csv(const std::string& path, const GridFunction& f, const std::string& value_name,
                       std::size_t max_rows) {
    const TimeGrid& tg = f.times();
    const SpatialGrid& sg = f.space();
    const std::size_t d = sg.dimension();
    const std::size_t n = sg.node_count();
    const std::size_t nt = tg.size();
    // Slices 0, stride, 2 stride, ... plus the last one.
    auto kept = [nt](std::size_t stride) { return (nt + stride - 1) / stride + ((nt - 1) % stride != 0 ? 1 : 0); };
    std::size_t stride = 1;
    while (kept(stride) * n > max_rows && stride < nt) ++stride;

    std::string out = "t";
    for (std::size_t i = 0; i < d; ++i) out += fmt::format(",x{}", i);
    out += fmt::format(",{}\n", value_name);
    std::vector<double> x(d);
    for (std::size_t k = 0; k < nt; ++k) {
        if (k % stride != 0 && k + 1 != nt) continue;
        for (std::size_t node = 0; node < n; ++node) {
            sg.node_state(node, x);
            out += format_number(tg[k]);
            for (double xi : x) {
                out += ',';
                out += format_number(xi);
            }
            out += ',';
            out += format_number(f.at(k, node));
            out += '\n';
        }
    }
    write_text(path, out);
}

namespace {

template <class T>
void put(std::ofstream& f, T v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& f) {
    T v;
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw Error("truncated RGRD file");
    return v;
}

} // namespace

void write_rgrd(const std::string& path, const GridFunction& f) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", path));
    const TimeGrid& tg = f.times();
    const SpatialGrid& sg = f.space();
    out.write("RGRD", 4);
    put<std::uint32_t>(out, 1);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(sg.dimension()));
    put<std::uint64_t>(out, tg.size());
    for (double t : tg.times()) put(out, t);
    for (std::size_t i = 0; i < sg.dimension(); ++i) {
        put(out, sg.lower(i));
        put(out, sg.upper(i));
        put<std::uint64_t>(out, sg.points(i));
    }
    out.write(reinterpret_cast<const char*>(f.values().data()),
              static_cast<std::streamsize>(f.values().size() * sizeof(double)));
    if (!out) throw Error(fmt::format("write to '{}' failed", path));
}

GridFunction read_rgrd(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot read '{}'", path));
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "RGRD", 4) != 0) throw Error(fmt::format("'{}' is not an RGRD file", path));
    if (get<std::uint32_t>(in) != 1) throw Error("unsupported RGRD version");
    const auto d = get<std::uint32_t>(in);
    const auto nt = get<std::uint64_t>(in);
    std::vector<double> times(nt);
    for (auto& t : times) t = get<double>(in);
    std::vector<double> lo(d), hi(d);
    std::vector<std::size_t> pts(d);
    for (std::uint32_t i = 0; i < d; ++i) {
        lo[i] = get<double>(in);
        hi[i] = get<double>(in);
        pts[i] = get<std::uint64_t>(in);
    }
    GridFunction f(TimeGrid(times), SpatialGrid(lo, hi, pts));
    in.read(reinterpret_cast<char*>(f.values().data()),
            static_cast<std::streamsize>(f.values().size() * sizeof(double)));
    if (!in) throw Error("truncated RGRD payload");
    return f;
}

} // namespace radner
