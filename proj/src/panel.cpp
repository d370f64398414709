#include "spillbreak/panel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace spillbreak {

PanelData::PanelData(Eigen::MatrixXd y, Eigen::MatrixXd x, Eigen::MatrixXd z,
                     std::vector<std::string> unit_labels, std::vector<long long> times)
    : y_(std::move(y)), x_(std::move(x)), z_(std::move(z)),
      labels_(std::move(unit_labels)), times_(std::move(times)) {
    if (y_.rows() < 1 || y_.cols() < 1)
        throw InvalidPanel("panel must have at least one unit and one period");
    if (x_.rows() != y_.rows() || x_.cols() != y_.cols() || z_.rows() != y_.rows() ||
        z_.cols() != y_.cols())
        throw InvalidPanel("y, x and z must share the same N x T shape");
    if (!y_.allFinite() || !x_.allFinite() || !z_.allFinite())
        throw InvalidPanel("panel contains non-finite values");
    if (labels_.empty()) {
        for (int i = 0; i < n_units(); ++i) labels_.push_back(std::to_string(i));
    }
    if (times_.empty()) {
        for (int t = 0; t < n_periods(); ++t) times_.push_back(t + 1);
    }
    if (static_cast<int>(labels_.size()) != n_units() ||
        static_cast<int>(times_.size()) != n_periods())
        throw InvalidPanel("label or time vector does not match panel shape");
}

PanelData PanelData::slice_periods(int first, int count) const {
    if (first < 0 || count < 1 || first + count > n_periods())
        throw InvalidArgument("period slice out of range");
    std::vector<long long> times(times_.begin() + first, times_.begin() + first + count);
    return PanelData(y_.middleCols(first, count), x_.middleCols(first, count),
                     z_.middleCols(first, count), labels_, std::move(times));
}

void require_estimable(const PanelData& panel) {
    if (panel.n_units() < 2 || panel.n_periods() < 8)
        throw InvalidPanel("estimation needs N >= 2 and T >= 8, got N=" +
                           std::to_string(panel.n_units()) + " T=" + std::to_string(panel.n_periods()));
}

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, std::size_t row, const char* name) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ParseError(row, std::string("field '") + name + "' is not a finite number: '" + s + "'");
    return v;
}

long long parse_time(const std::string& s, std::size_t row) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(row, "field 'time' is not an integer: '" + s + "'");
    return v;
}

struct Cell {
    double y, x, z;
};

}  // namespace

PanelData load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "empty file, header `unit,time,y,x,z` expected");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    const auto header = split_fields(line);
    if (header != std::vector<std::string>{"unit", "time", "y", "x", "z"})
        throw ParseError(1, "header must be `unit,time,y,x,z`");

    std::vector<std::string> units;
    std::unordered_map<std::string, int> unit_index;
    std::map<std::pair<int, long long>, Cell> cells;
    std::map<long long, int> time_set;

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 5) throw ParseError(row, "expected 5 fields, got " + std::to_string(f.size()));
        if (f[0].empty()) throw ParseError(row, "empty unit identifier");
        const long long time = parse_time(f[1], row);
        const Cell cell{parse_double(f[2], row, "y"), parse_double(f[3], row, "x"),
                        parse_double(f[4], row, "z")};
        auto [it, inserted] = unit_index.try_emplace(f[0], static_cast<int>(units.size()));
        if (inserted) units.push_back(f[0]);
        if (!cells.emplace(std::make_pair(it->second, time), cell).second)
            throw ParseError(row, "duplicate cell unit=" + f[0] + " time=" + f[1]);
        time_set.emplace(time, 0);
    }
    if (units.empty()) throw ParseError(row, "no data rows");

    std::vector<long long> times;
    for (auto& [t, idx] : time_set) {
        idx = static_cast<int>(times.size());
        times.push_back(t);
    }
    const int n = static_cast<int>(units.size());
    const int periods = static_cast<int>(times.size());
    Eigen::MatrixXd y(n, periods), x(n, periods), z(n, periods);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < periods; ++t) {
            auto it = cells.find({i, times[t]});
            if (it == cells.end()) throw BalancedPanelError(units[i], times[t]);
            y(i, t) = it->second.y;
            x(i, t) = it->second.x;
            z(i, t) = it->second.z;
        }
    }
    return PanelData(std::move(y), std::move(x), std::move(z), std::move(units), std::move(times));
}

void write_csv(const PanelData& panel, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "unit,time,y,x,z\n";
    char buf[128];
    for (int i = 0; i < panel.n_units(); ++i) {
        for (int t = 0; t < panel.n_periods(); ++t) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", panel.y()(i, t), panel.x()(i, t),
                          panel.z()(i, t));
            out << panel.unit_labels()[i] << ',' << panel.times()[t] << ',' << buf << '\n';
        }
    }
    if (!out) throw IoError("failed writing " + path.string());
}

void write_unit_index_json(const PanelData& panel, const std::filesystem::path& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (int i = 0; i < panel.n_units(); ++i) j[panel.unit_labels()[i]] = i;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

PanelData demean_within(const PanelData& panel) {
    auto centre = [](const Eigen::MatrixXd& m) -> Eigen::MatrixXd {
        return m.colwise() - m.rowwise().mean();
    };
    return PanelData(centre(panel.y()), centre(panel.x()), centre(panel.z()), panel.unit_labels(),
                     panel.times());
}

PanelData demean_outcome(const PanelData& panel) {
    return PanelData(panel.y().colwise() - panel.y().rowwise().mean(), panel.x(), panel.z(), panel.unit_labels(),
                     panel.times());
}

RegimeDesign build_regime_design(const PanelData& panel, int breakpoint, bool split_z) {
    const int n = panel.n_units();
    const int periods = panel.n_periods();
    if (breakpoint < 1 || breakpoint > periods - 1) throw InvalidBreakpoint(breakpoint, periods);

    RegimeDesign d;
    d.breakpoint = breakpoint;
    d.split_z = split_z;
    d.n_units = n;
    d.n_periods = periods;
    const int p = 2 * n + (split_z ? 2 : 1);
    d.rows = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * periods, p);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < periods; ++t) {
            auto r = d.rows.row(i * periods + t);
            const bool pre = t < breakpoint;
            r.segment(pre ? 0 : n, n) = panel.x().col(t).transpose();
            if (split_z)
                r(2 * n + (pre ? 0 : 1)) = panel.z()(i, t);
            else
                r(2 * n) = panel.z()(i, t);
        }
    }
    return d;
}

Eigen::MatrixXd spillover_design(const PanelData& panel, const SpilloverLayout& layout,
                                 std::span<const int> periods) {
    const int n = panel.n_units();
    if (layout.n_units != n) throw InvalidArgument("layout unit count does not match panel");
    if (layout.gamma_split && (layout.breakpoint < 1 || layout.breakpoint > panel.n_periods() - 1))
        throw InvalidBreakpoint(layout.breakpoint, panel.n_periods());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(periods.size()), layout.columns());
    for (std::size_t r = 0; r < periods.size(); ++r) {
        const int t = periods[r];
        const int offset = (layout.gamma_split && t >= layout.breakpoint) ? n : 0;
        d.row(static_cast<Eigen::Index>(r)).segment(offset, n) = panel.x().col(t).transpose();
    }
    return d;
}

std::vector<int> all_periods(int periods) {
    std::vector<int> out(periods);
    for (int t = 0; t < periods; ++t) out[t] = t;
    return out;
}

SampleSplit split_segment(int first, int count) {
    if (count < 2) throw RegimeTooShort("segment of " + std::to_string(count) + " periods cannot be split");
    SampleSplit s;
    const int main_len = (count + 1) / 2;
    for (int t = first; t < first + main_len; ++t) s.main.push_back(t);
    for (int t = first + main_len; t < first + count; ++t) s.aux.push_back(t);
    return s;
}

SampleSplit split_regimes(int periods, int breakpoint) {
    if (breakpoint < 1 || breakpoint > periods - 1) throw InvalidBreakpoint(breakpoint, periods);
    if (breakpoint < 2 || periods - breakpoint < 2)
        throw RegimeTooShort("each regime needs at least 2 periods (b=" + std::to_string(breakpoint) +
                             ", T=" + std::to_string(periods) + ")");
    auto pre = split_segment(0, breakpoint);
    auto post = split_segment(breakpoint, periods - breakpoint);
    pre.main.insert(pre.main.end(), post.main.begin(), post.main.end());
    pre.aux.insert(pre.aux.end(), post.aux.begin(), post.aux.end());
    return pre;
}

}  // namespace spillbreak
