#ifndef MUCOR_FIELD_IO_HPP
#define MUCOR_FIELD_IO_HPP

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "mucor/channel.hpp"
#include "mucor/fields.hpp"
#include "mucor/grid.hpp"

namespace mucor {

// All field files are CSV with a single header line
//   # grid <nx> <ny> <kind>
// followed by float64 values printed with 17 significant digits so that
// load(store(x)) == x bit-exactly.
//
//   kind=cell    one line per cell row, nx values
//   kind=nodal   one line per node row, nx+1 values
//   kind=tensor  one line per cell (row-major), 3 values: k11, k12, k22

namespace io_detail {

inline std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return in;
}

struct Header {
    int nx = 0, ny = 0;
    std::string kind;
};

inline Header read_header(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty field file: " + path);
    std::istringstream ss(line);
    std::string hash, word;
    Header h;
    ss >> hash >> word >> h.nx >> h.ny >> h.kind;
    if (hash != "#" || word != "grid" || h.nx < 1 || h.ny < 1 || h.kind.empty())
        throw std::runtime_error("bad field header in " + path + ": " + line);
    return h;
}

inline std::vector<double> read_values(std::istream& in, size_t expected, const std::string& path) {
    std::vector<double> vals;
    vals.reserve(expected);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            size_t pos = 0;
            double v;
            try {
                v = std::stod(tok, &pos);
            } catch (const std::exception&) {
                throw std::runtime_error("unparseable value '" + tok + "' in " + path);
            }
            while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
            if (pos != tok.size())
                throw std::runtime_error("unparseable value '" + tok + "' in " + path);
            if (!std::isfinite(v)) throw std::runtime_error("non-finite value in " + path);
            vals.push_back(v);
        }
    }
    if (vals.size() != expected)
        throw std::runtime_error("dimension mismatch in " + path + ": expected " +
                                 std::to_string(expected) + " values, got " +
                                 std::to_string(vals.size()));
    return vals;
}

}  // namespace io_detail

inline void store_field(const ScalarCellField& f, const std::string& path) {
    auto out = io_detail::open_out(path);
    out << "# grid " << f.grid.nx << ' ' << f.grid.ny << " cell\n";
    for (int j = 0; j < f.grid.ny; ++j) {
        for (int i = 0; i < f.grid.nx; ++i) {
            if (i) out << ',';
            out << io_detail::format_value(f.values[static_cast<size_t>(f.grid.cell_id(i, j))]);
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline void store_field(const NodalField& f, const std::string& path) {
    auto out = io_detail::open_out(path);
    out << "# grid " << f.grid.nx << ' ' << f.grid.ny << " nodal\n";
    for (int j = 0; j <= f.grid.ny; ++j) {
        for (int i = 0; i <= f.grid.nx; ++i) {
            if (i) out << ',';
            out << io_detail::format_value(f.values[static_cast<size_t>(f.grid.node_id(i, j))]);
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline void store_field(const TensorCellField& f, const std::string& path) {
    auto out = io_detail::open_out(path);
    out << "# grid " << f.grid.nx << ' ' << f.grid.ny << " tensor\n";
    for (size_t c = 0; c < f.k11.size(); ++c)
        out << io_detail::format_value(f.k11[c]) << ',' << io_detail::format_value(f.k12[c]) << ','
            << io_detail::format_value(f.k22[c]) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

using FieldVariant = std::variant<ScalarCellField, NodalField, TensorCellField>;

[[nodiscard]] inline FieldVariant load_field(const std::string& path) {
    auto in = io_detail::open_in(path);
    const auto h = io_detail::read_header(in, path);
    const StructuredGrid grid = build_grid(h.nx, h.ny);
    if (h.kind == "cell") {
        auto vals = io_detail::read_values(in, static_cast<size_t>(grid.cell_count()), path);
        return ScalarCellField(grid, std::move(vals));
    }
    if (h.kind == "nodal") {
        auto vals = io_detail::read_values(in, static_cast<size_t>(grid.node_count()), path);
        return NodalField(grid, std::move(vals));
    }
    if (h.kind == "tensor") {
        auto vals = io_detail::read_values(in, 3 * static_cast<size_t>(grid.cell_count()), path);
        TensorCellField f(grid);
        for (int c = 0; c < grid.cell_count(); ++c) {
            f.k11[static_cast<size_t>(c)] = vals[3 * static_cast<size_t>(c)];
            f.k12[static_cast<size_t>(c)] = vals[3 * static_cast<size_t>(c) + 1];
            f.k22[static_cast<size_t>(c)] = vals[3 * static_cast<size_t>(c) + 2];
        }
        f.validate();
        return f;
    }
    throw std::runtime_error("unknown field kind '" + h.kind + "' in " + path);
}

[[nodiscard]] inline ScalarCellField load_cell_field(const std::string& path) {
    auto v = load_field(path);
    if (auto* f = std::get_if<ScalarCellField>(&v)) return std::move(*f);
    throw std::runtime_error("expected kind=cell in " + path);
}

[[nodiscard]] inline NodalField load_nodal_field(const std::string& path) {
    auto v = load_field(path);
    if (auto* f = std::get_if<NodalField>(&v)) return std::move(*f);
    throw std::runtime_error("expected kind=nodal in " + path);
}

[[nodiscard]] inline TensorCellField load_tensor_field(const std::string& path) {
    auto v = load_field(path);
    if (auto* f = std::get_if<TensorCellField>(&v)) return std::move(*f);
    throw std::runtime_error("expected kind=tensor in " + path);
}

/// Write one CSV per snapshot plus an index file `<stem>.index.csv`
/// with lines `step,t,filename`, listing snapshots in step order.
inline void store_time_series(const std::vector<NodalField>& snapshots, double tau,
                              const std::string& stem) {
    auto index = io_detail::open_out(stem + ".index.csv");
    index << "step,t,file\n";
    for (size_t k = 0; k < snapshots.size(); ++k) {
        char name[64];
        std::snprintf(name, sizeof(name), ".step%04zu.csv", k + 1);
        const std::string file = stem + name;
        store_field(snapshots[k], file);
        index << (k + 1) << ',' << io_detail::format_value(static_cast<double>(k + 1) * tau) << ','
              << std::filesystem::path(file).filename().string() << '\n';
    }
    if (!index) throw std::runtime_error("write failed: " + stem + ".index.csv");
}

[[nodiscard]] inline std::vector<NodalField> load_time_series(const std::string& stem) {
    auto in = io_detail::open_in(stem + ".index.csv");
    std::string line;
    if (!std::getline(in, line) || line != "step,t,file")
        throw std::runtime_error("bad time-series index header in " + stem + ".index.csv");
    std::vector<NodalField> snaps;
    const auto dir = std::filesystem::path(stem).parent_path();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto p1 = line.find(','), p2 = line.find(',', p1 + 1);
        if (p1 == std::string::npos || p2 == std::string::npos)
            throw std::runtime_error("bad index row '" + line + "' in " + stem + ".index.csv");
        snaps.push_back(load_nodal_field((dir / line.substr(p2 + 1)).string()));
    }
    return snaps;
}

/// ChannelSpec JSON: {background, channel, strokes:[{x0,y0,x1,y1,width}], seed}.
[[nodiscard]] inline ChannelSpec channel_spec_from_json(const nlohmann::json& j) {
    ChannelSpec spec;
    spec.background = j.at("background").get<double>();
    spec.channel = j.at("channel").get<double>();
    spec.seed = j.value("seed", std::uint64_t{0});
    for (const auto& s : j.value("strokes", nlohmann::json::array())) {
        ChannelStroke st;
        st.x0 = s.at("x0").get<double>();
        st.y0 = s.at("y0").get<double>();
        st.x1 = s.at("x1").get<double>();
        st.y1 = s.at("y1").get<double>();
        st.width = s.at("width").get<double>();
        spec.strokes.push_back(st);
    }
    spec.validate();
    return spec;
}

[[nodiscard]] inline ChannelSpec load_channel_spec(const std::string& path) {
    auto in = io_detail::open_in(path);
    nlohmann::json j;
    in >> j;
    return channel_spec_from_json(j);
}

}  // namespace mucor

#endif  // MUCOR_FIELD_IO_HPP
