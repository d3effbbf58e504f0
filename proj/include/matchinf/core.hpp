// Domain types and dataset file I/O.
//
// A Dataset is an ordered list of units (x, y, z); all downstream indices
// (matchings, matched sets) refer to the original row order, which load/save
// preserve exactly. CSV layout: header `x1,...,xd,y,z`, one row per unit.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matchinf/errors.hpp"

namespace matchinf {

struct Unit {
    std::vector<double> x;  // covariates, length d
    double y = 0.0;         // outcome
    int z = 0;              // treatment in {0,1}
};

class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Unit> units, int d);

    int d() const { return d_; }
    int n() const { return static_cast<int>(units_.size()); }
    int n1() const { return static_cast<int>(treated_.size()); }
    int n0() const { return static_cast<int>(controls_.size()); }

    const Unit& unit(int i) const { return units_[static_cast<std::size_t>(i)]; }
    const std::vector<Unit>& units() const { return units_; }

    // Row indices of treated / control units, in original order.
    const std::vector<int>& treated_indices() const { return treated_; }
    const std::vector<int>& control_indices() const { return controls_; }

private:
    std::vector<Unit> units_;
    std::vector<int> treated_;
    std::vector<int> controls_;
    int d_ = 0;
};

// Parse a dataset CSV. Errors name the offending row and column.
Dataset parse_dataset_csv(const std::string& text);
Dataset load_dataset(const std::string& path);

// Write a dataset CSV with shortest round-trip number formatting, so that
// load(save(D)) reproduces D bit-for-bit.
std::string dataset_to_csv(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::string& path);

}  // namespace matchinf
