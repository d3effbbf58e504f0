#include "matchinf/core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "matchinf/errors.hpp"
#include "matchinf/numeric.hpp"

namespace matchinf {

Dataset::Dataset(std::vector<Unit> units, int d) : units_(std::move(units)), d_(d) {
    if (d_ <= 0) throw ContractError("dataset dimension must be positive, got " + std::to_string(d_));
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const Unit& u = units_[i];
        if (static_cast<int>(u.x.size()) != d_) {
            throw ContractError("unit " + std::to_string(i) + " has " + std::to_string(u.x.size()) +
                                " covariates, expected " + std::to_string(d_));
        }
        if (u.z != 0 && u.z != 1) {
            throw ContractError("unit " + std::to_string(i) + " has treatment " + std::to_string(u.z) +
                                ", expected 0 or 1");
        }
        if (u.z == 1) {
            treated_.push_back(static_cast<int>(i));
        } else {
            controls_.push_back(static_cast<int>(i));
        }
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string trimmed(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_field_double(const std::string& raw, int row, const std::string& column) {
    const std::string s = trimmed(raw);
    if (s.empty()) {
        throw ParseError("row " + std::to_string(row) + ", column " + column + ": empty field");
    }
    double value = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
        throw ParseError("row " + std::to_string(row) + ", column " + column + ": cannot parse '" + s +
                         "' as a finite number");
    }
    return value;
}

int parse_field_treatment(const std::string& raw, int row) {
    const std::string s = trimmed(raw);
    if (s == "0") return 0;
    if (s == "1") return 1;
    throw ParseError("row " + std::to_string(row) + ", column z: expected 0 or 1, got '" + s + "'");
}

}  // namespace

Dataset parse_dataset_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("dataset is empty: missing header line");
    const std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 3) {
        throw ParseError("header must contain x1,...,xd,y,z (at least 3 columns), got " +
                         std::to_string(header.size()));
    }
    const int d = static_cast<int>(header.size()) - 2;
    for (int j = 0; j < d; ++j) {
        const std::string want = "x" + std::to_string(j + 1);
        if (trimmed(header[j]) != want) {
            throw ParseError("header column " + std::to_string(j + 1) + ": expected '" + want + "', got '" +
                             trimmed(header[j]) + "'");
        }
    }
    if (trimmed(header[d]) != "y") {
        throw ParseError("header column " + std::to_string(d + 1) + ": expected 'y', got '" +
                         trimmed(header[d]) + "'");
    }
    if (trimmed(header[d + 1]) != "z") {
        throw ParseError("header column " + std::to_string(d + 2) + ": expected 'z', got '" +
                         trimmed(header[d + 1]) + "'");
    }

    std::vector<Unit> units;
    int row = 1;  // header is row 0
    while (std::getline(in, line)) {
        if (trimmed(line).empty()) {
            ++row;
            continue;
        }
        const std::vector<std::string> fields = split_csv_line(line);
        if (static_cast<int>(fields.size()) != d + 2) {
            throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(d + 2) +
                             " fields, got " + std::to_string(fields.size()));
        }
        Unit u;
        u.x.resize(d);
        for (int j = 0; j < d; ++j) u.x[j] = parse_field_double(fields[j], row, "x" + std::to_string(j + 1));
        u.y = parse_field_double(fields[d], row, "y");
        u.z = parse_field_treatment(fields[d + 1], row);
        units.push_back(std::move(u));
        ++row;
    }
    if (units.empty()) throw ParseError("dataset has a header but no data rows");
    return Dataset(std::move(units), d);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_dataset_csv(buf.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

std::string dataset_to_csv(const Dataset& data) {
    std::ostringstream out;
    for (int j = 0; j < data.d(); ++j) out << "x" << (j + 1) << ",";
    out << "y,z\n";
    for (const Unit& u : data.units()) {
        for (int j = 0; j < data.d(); ++j) out << format_double(u.x[j]) << ",";
        out << format_double(u.y) << "," << u.z << "\n";
    }
    return out.str();
}

void save_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open output file: " + path);
    out << dataset_to_csv(data);
    if (!out) throw IoError("failed while writing: " + path);
}

}  // namespace matchinf
