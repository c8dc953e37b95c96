#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gci/dense.hpp"
#include "gci/graph.hpp"

// Panel data shared across selection, fitting, and the causal pipeline. Test
// stores carry the observed series; control stores enter only through the
// regression design. A design column couples one control series to the set of
// test stores whose regression it loads on, which covers both the
// block-diagonal per-store layout (each column owned by a single store) and a
// shared design where every store regresses on the same controls.

namespace gci {

struct DesignColumn {
    std::string control_id;
    Eigen::VectorXd x;        // control values over the full time range
    std::vector<int> stores;  // test-store indices this column applies to
};

struct TimeSeriesPanel {
    std::vector<std::string> store_ids;  // test stores, size n
    std::vector<std::string> regions;    // size n
    std::vector<std::int64_t> timestamps;
    Eigen::MatrixXd y;  // n x T_total, NaN = missing
    std::vector<DesignColumn> design;
    Eigen::Index causal_start = 0;  // pre-period = [0, causal_start)
    Adjacency adjacency;

    Eigen::Index n_series() const { return y.rows(); }
    Eigen::Index n_times() const { return y.cols(); }
    Eigen::Index n_design() const { return static_cast<Eigen::Index>(design.size()); }

    void validate() const {
        const Eigen::Index n = y.rows(), T = y.cols();
        if (static_cast<Eigen::Index>(store_ids.size()) != n ||
            static_cast<Eigen::Index>(regions.size()) != n)
            throw std::invalid_argument("panel: store label count disagrees with Y rows");
        if (static_cast<Eigen::Index>(timestamps.size()) != T)
            throw std::invalid_argument("panel: timestamp count disagrees with Y columns");
        if (T >= 2) {
            const std::int64_t step = timestamps[1] - timestamps[0];
            if (step <= 0) throw std::invalid_argument("panel: timestamps must be strictly increasing");
            for (std::size_t t = 1; t < timestamps.size(); ++t)
                if (timestamps[t] - timestamps[t - 1] != step)
                    throw std::invalid_argument("panel: non-uniform timestamp spacing at position " +
                                                std::to_string(t));
        }
        if (causal_start <= 0 || causal_start >= T)
            throw std::invalid_argument("panel: causal start must lie strictly inside the time range");
        validate_adjacency(adjacency);
        if (adjacency.rows() != n) throw std::invalid_argument("panel: adjacency size disagrees with Y rows");
        for (const auto& col : design) {
            if (col.x.size() != T)
                throw std::invalid_argument("panel: design column '" + col.control_id +
                                            "' length disagrees with the time range");
            for (int s : col.stores)
                if (s < 0 || s >= n)
                    throw std::invalid_argument("panel: design column '" + col.control_id +
                                                "' references an unknown store");
        }
    }

    // Regression design slice at time t: n x p with zeros where a column does
    // not apply to a store.
    Eigen::MatrixXd design_at(Eigen::Index t) const {
        Eigen::MatrixXd x = Eigen::MatrixXd::Zero(y.rows(), n_design());
        for (Eigen::Index j = 0; j < n_design(); ++j)
            for (int s : design[j].stores) x(s, j) = design[j].x(t);
        return x;
    }

    // Pre-period view of the observations.
    Eigen::MatrixXd pre_period() const { return y.leftCols(causal_start); }
};

struct PanelSubset {
    TimeSeriesPanel panel;
    std::vector<Eigen::Index> original_columns;  // surviving design columns, source indices
};

// Restriction to the given test stores, kept in the given order. Design
// columns keep only the kept stores they apply to; columns left with none
// are dropped, and the source index of each survivor is recorded.
inline PanelSubset subset_panel(const TimeSeriesPanel& in, const std::vector<int>& keep) {
    PanelSubset out;
    const Eigen::Index nk = static_cast<Eigen::Index>(keep.size());
    out.panel.timestamps = in.timestamps;
    out.panel.causal_start = in.causal_start;
    out.panel.y.resize(nk, in.y.cols());
    out.panel.adjacency.resize(nk, nk);
    for (Eigen::Index a = 0; a < nk; ++a) {
        out.panel.store_ids.push_back(in.store_ids[keep[a]]);
        out.panel.regions.push_back(in.regions[keep[a]]);
        out.panel.y.row(a) = in.y.row(keep[a]);
        for (Eigen::Index b = 0; b < nk; ++b)
            out.panel.adjacency(a, b) = in.adjacency(keep[a], keep[b]);
    }
    for (Eigen::Index j = 0; j < in.n_design(); ++j) {
        DesignColumn c;
        c.control_id = in.design[j].control_id;
        c.x = in.design[j].x;
        for (int s : in.design[j].stores) {
            auto it = std::find(keep.begin(), keep.end(), s);
            if (it != keep.end()) c.stores.push_back(static_cast<int>(it - keep.begin()));
        }
        if (!c.stores.empty()) {
            out.panel.design.push_back(std::move(c));
            out.original_columns.push_back(j);
        }
    }
    return out;
}

// One panel per distinct region label (order of first appearance). Store
// indices, designs, and adjacency are restricted to each region's stores.
inline std::vector<TimeSeriesPanel> split_regions(const TimeSeriesPanel& panel) {
    std::vector<std::string> labels;
    for (const auto& r : panel.regions)
        if (std::find(labels.begin(), labels.end(), r) == labels.end()) labels.push_back(r);

    std::vector<TimeSeriesPanel> out;
    for (const auto& label : labels) {
        std::vector<int> keep;
        for (int i = 0; i < static_cast<int>(panel.regions.size()); ++i)
            if (panel.regions[i] == label) keep.push_back(i);
        out.push_back(subset_panel(panel, keep).panel);
    }
    return out;
}

}  // namespace gci
