#include "gci/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <utility>

namespace gci {

namespace {

constexpr const char* kPanelHeader = "store_id,role,region,timestamp,value";

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
    throw std::invalid_argument("ingest: line " + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string::size_type start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

// getline plus CR stripping, so CRLF input parses the same as LF.
bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

std::int64_t parse_timestamp(const std::string& s, std::size_t line_no) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        fail_line(line_no, "timestamp '" + s + "' is not an integer");
    return v;
}

double parse_value(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v))
        fail_line(line_no, "value '" + s + "' is not a finite number (leave the field empty for missing)");
    return v;
}

struct RawRow {
    std::size_t line_no = 0;
    std::string store_id, role, region;
    std::int64_t timestamp = 0;
    bool missing = false;
    double value = 0.0;
};

std::ofstream open_for_writing(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    return f;
}

void finish_write(std::ofstream& f, const std::string& path) {
    f.flush();
    if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

PanelIngest ingest_panel(std::istream& in, std::int64_t causal_start_time) {
    std::string line;
    if (!next_line(in, line)) throw std::invalid_argument("ingest: empty input");
    if (line != kPanelHeader)
        throw std::invalid_argument(std::string("ingest: line 1: header must be '") + kPanelHeader + "'");

    std::vector<RawRow> rows;
    for (std::size_t line_no = 2; next_line(in, line); ++line_no) {
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != 5)
            fail_line(line_no, "expected 5 fields, got " + std::to_string(fields.size()));
        RawRow r;
        r.line_no = line_no;
        r.store_id = fields[0];
        r.role = fields[1];
        r.region = fields[2];
        if (r.store_id.empty()) fail_line(line_no, "store_id is empty");
        if (r.role != "test" && r.role != "control")
            fail_line(line_no, "role must be 'test' or 'control', got '" + r.role + "'");
        if (r.region.empty()) fail_line(line_no, "region is empty");
        r.timestamp = parse_timestamp(fields[3], line_no);
        if (fields[4].empty()) {
            if (r.role == "control") fail_line(line_no, "control rows must carry a value");
            r.missing = true;
        } else {
            r.value = parse_value(fields[4], line_no);
        }
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw std::invalid_argument("ingest: no data rows");

    // Series registry: one role and one region per id, ids in file order.
    struct SeriesInfo {
        std::string role, region;
        std::size_t first_line = 0;
        Eigen::Index slot = -1;  // row of Y or design column, by role
    };
    std::vector<std::string> order;
    std::map<std::string, SeriesInfo> registry;
    for (const auto& r : rows) {
        auto it = registry.find(r.store_id);
        if (it == registry.end()) {
            registry.emplace(r.store_id, SeriesInfo{r.role, r.region, r.line_no, -1});
            order.push_back(r.store_id);
        } else if (it->second.role != r.role) {
            fail_line(r.line_no, "store '" + r.store_id + "' already has role '" + it->second.role +
                                     "' (line " + std::to_string(it->second.first_line) + ")");
        } else if (it->second.region != r.region) {
            fail_line(r.line_no, "store '" + r.store_id + "' already belongs to region '" +
                                     it->second.region + "' (line " +
                                     std::to_string(it->second.first_line) + ")");
        }
    }

    // Shared uniformly spaced time axis. The expected step is the most common
    // spacing, so the error can point at the gap rather than its neighbours.
    std::vector<std::int64_t> times;
    times.reserve(rows.size());
    for (const auto& r : rows) times.push_back(r.timestamp);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());
    if (times.size() < 2) throw std::invalid_argument("ingest: need at least two distinct timestamps");
    std::map<std::int64_t, std::size_t> step_votes;
    for (std::size_t t = 1; t < times.size(); ++t) ++step_votes[times[t] - times[t - 1]];
    std::int64_t step = 0;
    std::size_t best = 0;
    for (const auto& [s, count] : step_votes)
        if (count > best) step = s, best = count;
    for (std::size_t t = 1; t < times.size(); ++t) {
        const std::int64_t gap = times[t] - times[t - 1];
        if (gap != step)
            throw std::invalid_argument("ingest: non-uniform timestamp spacing: gap of " +
                                        std::to_string(gap) + " between " + std::to_string(times[t - 1]) +
                                        " and " + std::to_string(times[t]) + " (expected step " +
                                        std::to_string(step) + ")");
    }
    const auto time_index = [&](std::int64_t ts) {
        const auto it = std::lower_bound(times.begin(), times.end(), ts);
        return static_cast<Eigen::Index>(it - times.begin());
    };
    const Eigen::Index T = static_cast<Eigen::Index>(times.size());

    std::vector<std::string> test_ids, control_ids;
    for (const auto& id : order) {
        auto& info = registry.at(id);
        if (info.role == "test") {
            info.slot = static_cast<Eigen::Index>(test_ids.size());
            test_ids.push_back(id);
        } else {
            info.slot = static_cast<Eigen::Index>(control_ids.size());
            control_ids.push_back(id);
        }
    }
    const Eigen::Index n_all = static_cast<Eigen::Index>(test_ids.size());
    const Eigen::Index p = static_cast<Eigen::Index>(control_ids.size());
    if (n_all == 0) throw std::invalid_argument("ingest: no test stores in the input");

    const double nan = std::numeric_limits<double>::quiet_NaN();
    Eigen::MatrixXd y_all = Eigen::MatrixXd::Constant(n_all, T, nan);
    Eigen::MatrixXd x_all = Eigen::MatrixXd::Constant(p, T, nan);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> seen_y =
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(std::max<Eigen::Index>(n_all, 1), T);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> seen_x =
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(std::max<Eigen::Index>(p, 1), T);
    for (const auto& r : rows) {
        const auto& info = registry.at(r.store_id);
        const Eigen::Index t = time_index(r.timestamp);
        auto& seen = info.role == "test" ? seen_y : seen_x;
        if (seen(info.slot, t))
            fail_line(r.line_no, "duplicate row for store '" + r.store_id + "' at timestamp " +
                                     std::to_string(r.timestamp));
        seen(info.slot, t) = 1;
        if (info.role == "test") {
            if (!r.missing) y_all(info.slot, t) = r.value;
        } else {
            x_all(info.slot, t) = r.value;
        }
    }
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index t = 0; t < T; ++t)
            if (std::isnan(x_all(j, t)))
                throw std::invalid_argument("ingest: control '" + control_ids[j] +
                                            "' has no value at timestamp " + std::to_string(times[t]));

    // Region blocking: a control series applies to every test store of its
    // region. A test store whose region has no controls is dropped (there is
    // nothing to build its counterfactual from); oversized regions are
    // rejected because exact inference is sized for blocks of at most 15.
    std::vector<std::string> region_order;
    std::map<std::string, bool> region_has_control;
    std::map<std::string, Eigen::Index> region_test_count;
    for (const auto& id : test_ids) {
        const auto& region = registry.at(id).region;
        if (!region_test_count.count(region)) region_order.push_back(region);
        ++region_test_count[region];
    }
    for (const auto& id : control_ids) {
        const auto& region = registry.at(id).region;
        if (!region_test_count.count(region))
            throw std::invalid_argument("ingest: control '" + id + "': region '" + region +
                                        "' has no test stores");
        region_has_control[region] = true;
    }
    for (const auto& region : region_order) {
        if (!region_has_control[region]) continue;
        if (region_test_count.at(region) > 15)
            throw std::invalid_argument("ingest: region '" + region + "' holds " +
                                        std::to_string(region_test_count.at(region)) +
                                        " test stores; split it into blocks of at most 15");
    }

    PanelIngest out;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index i = 0; i < n_all; ++i) {
        const auto& region = registry.at(test_ids[i]).region;
        if (region_has_control[region])
            kept.push_back(i);
        else
            out.dropped_stores.push_back(test_ids[i]);
    }
    if (kept.empty()) throw std::invalid_argument("ingest: every test store lacks a control series in its region");

    TimeSeriesPanel& panel = out.panel;
    const Eigen::Index n = static_cast<Eigen::Index>(kept.size());
    panel.timestamps = times;
    panel.y.resize(n, T);
    for (Eigen::Index a = 0; a < n; ++a) {
        panel.store_ids.push_back(test_ids[kept[a]]);
        panel.regions.push_back(registry.at(test_ids[kept[a]]).region);
        panel.y.row(a) = y_all.row(kept[a]);
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        DesignColumn col;
        col.control_id = control_ids[j];
        col.x = x_all.row(j).transpose();
        const auto& region = registry.at(control_ids[j]).region;
        for (Eigen::Index a = 0; a < n; ++a)
            if (panel.regions[a] == region) col.stores.push_back(static_cast<int>(a));
        panel.design.push_back(std::move(col));
    }
    panel.adjacency = Adjacency::Identity(n, n);

    const auto ct = std::lower_bound(times.begin(), times.end(), causal_start_time);
    if (ct == times.end() || *ct != causal_start_time)
        throw std::invalid_argument("ingest: causal start timestamp " +
                                    std::to_string(causal_start_time) +
                                    " does not appear in the data");
    panel.causal_start = static_cast<Eigen::Index>(ct - times.begin());
    panel.validate();
    return out;
}

PanelIngest ingest_panel_file(const std::string& path, std::int64_t causal_start_time) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    return ingest_panel(f, causal_start_time);
}

CoordinateTable read_coordinates(std::istream& in) {
    std::string line;
    if (!next_line(in, line)) throw std::invalid_argument("coordinates: empty input");
    if (line != "store_id,x,y")
        throw std::invalid_argument("coordinates: line 1: header must be 'store_id,x,y'");
    std::vector<std::string> ids;
    std::vector<double> xs, ys;
    for (std::size_t line_no = 2; next_line(in, line); ++line_no) {
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != 3)
            throw std::invalid_argument("coordinates: line " + std::to_string(line_no) +
                                        ": expected 3 fields, got " + std::to_string(fields.size()));
        if (fields[0].empty())
            throw std::invalid_argument("coordinates: line " + std::to_string(line_no) + ": store_id is empty");
        if (std::find(ids.begin(), ids.end(), fields[0]) != ids.end())
            throw std::invalid_argument("coordinates: line " + std::to_string(line_no) +
                                        ": duplicate store '" + fields[0] + "'");
        ids.push_back(fields[0]);
        xs.push_back(parse_value(fields[1], line_no));
        ys.push_back(parse_value(fields[2], line_no));
    }
    CoordinateTable out;
    out.ids = std::move(ids);
    out.xy.resize(static_cast<Eigen::Index>(out.ids.size()), 2);
    for (Eigen::Index i = 0; i < out.xy.rows(); ++i) {
        out.xy(i, 0) = xs[i];
        out.xy(i, 1) = ys[i];
    }
    return out;
}

CoordinateTable read_coordinates_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open '" + path + "'");
    return read_coordinates(f);
}

Adjacency derive_graph(const std::vector<std::string>& store_ids, const CoordinateTable& coords,
                       double threshold) {
    if (!(threshold > 0.0))
        throw std::invalid_argument("derive_graph: distance threshold must be positive");
    const Eigen::Index n = static_cast<Eigen::Index>(store_ids.size());
    Eigen::MatrixXd pos(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto it = std::find(coords.ids.begin(), coords.ids.end(), store_ids[i]);
        if (it == coords.ids.end())
            throw std::invalid_argument("derive_graph: store '" + store_ids[i] +
                                        "' is missing from the coordinate table");
        pos.row(i) = coords.xy.row(it - coords.ids.begin());
    }
    Adjacency graph = Adjacency::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const bool edge = (pos.row(i) - pos.row(j)).norm() <= threshold;
            graph(i, j) = graph(j, i) = edge ? 1 : 0;
        }
    return graph;
}

void write_panel(std::ostream& out, const TimeSeriesPanel& panel) {
    panel.validate();
    std::vector<std::string> all_ids = panel.store_ids;
    for (const auto& col : panel.design) all_ids.push_back(col.control_id);
    std::sort(all_ids.begin(), all_ids.end());
    const auto dup = std::adjacent_find(all_ids.begin(), all_ids.end());
    if (dup != all_ids.end())
        throw std::invalid_argument("panel write: duplicate series id '" + *dup + "'");

    // The long format carries a control through its region, so each column
    // must apply to exactly the test stores of one region.
    std::vector<std::string> col_regions;
    for (const auto& col : panel.design) {
        if (col.stores.empty())
            throw std::invalid_argument("panel write: design column '" + col.control_id +
                                        "' applies to no store");
        const std::string& region = panel.regions[col.stores[0]];
        std::vector<int> expected;
        for (Eigen::Index i = 0; i < panel.n_series(); ++i)
            if (panel.regions[i] == region) expected.push_back(static_cast<int>(i));
        std::vector<int> covered = col.stores;
        std::sort(covered.begin(), covered.end());
        if (covered != expected)
            throw std::invalid_argument("panel write: design column '" + col.control_id +
                                        "' does not apply to exactly the test stores of region '" +
                                        region + "'");
        if (!col.x.allFinite())
            throw std::invalid_argument("panel write: design column '" + col.control_id +
                                        "' has a missing value");
        col_regions.push_back(region);
    }

    out << kPanelHeader << "\n";
    for (Eigen::Index i = 0; i < panel.n_series(); ++i)
        for (Eigen::Index t = 0; t < panel.n_times(); ++t) {
            out << panel.store_ids[i] << ",test," << panel.regions[i] << ',' << panel.timestamps[t]
                << ',';
            if (!std::isnan(panel.y(i, t))) out << format_double(panel.y(i, t));
            out << "\n";
        }
    for (Eigen::Index j = 0; j < panel.n_design(); ++j)
        for (Eigen::Index t = 0; t < panel.n_times(); ++t)
            out << panel.design[j].control_id << ",control," << col_regions[j] << ','
                << panel.timestamps[t] << ',' << format_double(panel.design[j].x(t)) << "\n";
}

void write_panel_file(const std::string& path, const TimeSeriesPanel& panel) {
    auto f = open_for_writing(path);
    write_panel(f, panel);
    finish_write(f, path);
}

void write_selection_path(std::ostream& out, const std::vector<SelectionPathRow>& rows) {
    out << "v0,coefficient,beta,w,theta,threshold\n";
    for (const auto& row : rows)
        for (Eigen::Index j = 0; j < row.state.beta.size(); ++j)
            out << format_double(row.v0) << ',' << j << ',' << format_double(row.state.beta(j)) << ','
                << format_double(row.state.w(j)) << ',' << format_double(row.theta) << ','
                << format_double(row.threshold) << "\n";
}

void write_selection_path_file(const std::string& path, const std::vector<SelectionPathRow>& rows) {
    auto f = open_for_writing(path);
    write_selection_path(f, rows);
    finish_write(f, path);
}

void write_ks_table(std::ostream& out, const CausalReport& report) {
    out << "store_id,horizon,ks,threshold,significant\n";
    for (Eigen::Index i = 0; i < report.ks.rows(); ++i)
        for (Eigen::Index h = 0; h < report.ks.cols(); ++h)
            out << report.store_ids[i] << ',' << h + 1 << ',' << format_double(report.ks(i, h)) << ','
                << format_double(report.threshold(i, h)) << ',' << int(report.significant(i, h)) << "\n";
}

void write_ks_table_file(const std::string& path, const CausalReport& report) {
    auto f = open_for_writing(path);
    write_ks_table(f, report);
    finish_write(f, path);
}

void write_difference_table(std::ostream& out, const CausalReport& report) {
    out << "store_id,median,lo95,hi95\n";
    for (Eigen::Index i = 0; i < report.difference.median.size(); ++i)
        out << report.store_ids[i] << ',' << format_double(report.difference.median(i)) << ','
            << format_double(report.difference.lo95(i)) << ','
            << format_double(report.difference.hi95(i)) << "\n";
}

void write_difference_table_file(const std::string& path, const CausalReport& report) {
    auto f = open_for_writing(path);
    write_difference_table(f, report);
    finish_write(f, path);
}

void write_significance_summary(std::ostream& out, const CausalReport& report) {
    out << "horizon,n_significant\n";
    for (Eigen::Index h = 0; h < report.significant.cols(); ++h)
        out << h + 1 << ',' << report.significant.col(h).cast<int>().sum() << "\n";
}

void write_significance_summary_file(const std::string& path, const CausalReport& report) {
    auto f = open_for_writing(path);
    write_significance_summary(f, report);
    finish_write(f, path);
}

void write_impact_table(std::ostream& out, const std::vector<ImpactRow>& rows) {
    out << "store_id,true_impact,median,lo95,hi95\n";
    for (const auto& row : rows)
        out << row.store_id << ',' << format_double(row.true_impact) << ','
            << format_double(row.median) << ',' << format_double(row.lo95) << ','
            << format_double(row.hi95) << "\n";
}

void write_impact_table_file(const std::string& path, const std::vector<ImpactRow>& rows) {
    auto f = open_for_writing(path);
    write_impact_table(f, rows);
    finish_write(f, path);
}

}  // namespace gci
