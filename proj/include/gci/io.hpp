#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gci/causal.hpp"
#include "gci/emvs.hpp"
#include "gci/panel.hpp"
#include "gci/sim.hpp"

// Text interchange for panels and results. Everything here is plain
// comma-separated UTF-8 with a header row and LF line endings; numbers are
// written with 17 significant digits so a write/ingest round trip reproduces
// every double exactly.
//
// Panel long format, one row per (series, time):
//   store_id,role,region,timestamp,value
// Role is "test" or "control". Test rows carry observations; an empty value
// field (or an absent row) marks a missing observation. Control rows carry
// regressor values and apply to every test store in their region, so control
// series must be complete over the time range.

namespace gci {

struct PanelIngest {
    TimeSeriesPanel panel;                    // adjacency starts as the identity
    std::vector<std::string> dropped_stores;  // test stores with no control in their region
};

// Parse a long-format panel. causal_start_time is the timestamp of the first
// post-period day and must match one of the file's timestamps. Stores and
// controls keep file order. Throws std::invalid_argument naming the line for
// malformed rows, the gap for non-uniform timestamps, and the series for
// incomplete controls. A test store whose region has no control series is
// dropped and reported rather than rejected; a region with more than 15 test
// stores is rejected, since exact inference is sized for blocks up to 15.
PanelIngest ingest_panel(std::istream& in, std::int64_t causal_start_time);
PanelIngest ingest_panel_file(const std::string& path, std::int64_t causal_start_time);

// Store coordinates for distance-graph derivation. Format: store_id,x,y.
struct CoordinateTable {
    std::vector<std::string> ids;
    Eigen::MatrixXd xy;  // one row per id
};

CoordinateTable read_coordinates(std::istream& in);
CoordinateTable read_coordinates_file(const std::string& path);

// Distance graph over the given stores: edge between two stores exactly when
// their Euclidean distance is at most the threshold, unit diagonal. Every
// store must appear in the coordinate table.
Adjacency derive_graph(const std::vector<std::string>& store_ids, const CoordinateTable& coords,
                       double threshold);

// Inverse of ingest_panel for panels whose design columns apply region-wide
// (each column covers exactly the test stores of one region, as ingested
// panels and simulated panels do). Throws std::invalid_argument otherwise.
void write_panel(std::ostream& out, const TimeSeriesPanel& panel);
void write_panel_file(const std::string& path, const TimeSeriesPanel& panel);

// Selection path, one row per (grid point, coefficient):
//   v0,coefficient,beta,w,theta,threshold
void write_selection_path(std::ostream& out, const std::vector<SelectionPathRow>& rows);
void write_selection_path_file(const std::string& path, const std::vector<SelectionPathRow>& rows);

// Detection table, one row per (store, horizon), horizon counted from 1:
//   store_id,horizon,ks,threshold,significant
void write_ks_table(std::ostream& out, const CausalReport& report);
void write_ks_table_file(const std::string& path, const CausalReport& report);

// Temporal-average difference summary, one row per store:
//   store_id,median,lo95,hi95
void write_difference_table(std::ostream& out, const CausalReport& report);
void write_difference_table_file(const std::string& path, const CausalReport& report);

// Per-horizon count of stores flagged significant:
//   horizon,n_significant
void write_significance_summary(std::ostream& out, const CausalReport& report);
void write_significance_summary_file(const std::string& path, const CausalReport& report);

// Simulated-impact recovery table, one row per store:
//   store_id,true_impact,median,lo95,hi95
void write_impact_table(std::ostream& out, const std::vector<ImpactRow>& rows);
void write_impact_table_file(const std::string& path, const std::vector<ImpactRow>& rows);

// 17-significant-digit decimal text; round trips any finite double exactly.
std::string format_double(double v);

}  // namespace gci
