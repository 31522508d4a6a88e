#pragma once

// Labeled feature matrices and their CSV form. The CSV layout is a header
// row naming every feature plus a trailing `label` column of non-negative
// integers; values are written with 17 significant digits.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mlcv/common.hpp"

namespace mlcv {

struct LabeledDataset {
    Matrix X;                // rows = frames, columns = features
    std::vector<int> y;     // labels in {0..class_count-1}
    int class_count = 0;

    std::size_t size() const { return X.rows(); }
    std::size_t dim() const { return X.cols(); }

    void validate() const {
        if (X.rows() != y.size())
            throw InvalidDatasetError("dataset: X has " + std::to_string(X.rows()) +
                                      " rows but y has " + std::to_string(y.size()));
        if (class_count < 2) throw InvalidDatasetError("dataset: class_count must be >= 2");
        std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
        for (int label : y) {
            if (label < 0 || label >= class_count)
                throw InvalidDatasetError("dataset: label " + std::to_string(label) +
                                          " outside {0.." + std::to_string(class_count - 1) + "}");
            ++counts[static_cast<std::size_t>(label)];
        }
        for (int k = 0; k < class_count; ++k)
            if (counts[static_cast<std::size_t>(k)] == 0)
                throw InvalidDatasetError("dataset: class " + std::to_string(k) + " has no examples");
        if (!all_finite(X.data()))
            throw InvalidInputError("dataset: non-finite feature value");
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
        for (int label : y) ++counts[static_cast<std::size_t>(label)];
        return counts;
    }
};

namespace csv {

inline std::vector<std::string> split_line(const std::string& line, char sep = ',') {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

}  // namespace csv

inline void write_feature_csv(const std::string& path, const std::vector<std::string>& names,
                              const Matrix& X, const std::vector<int>* labels = nullptr) {
    if (names.size() != X.cols())
        throw InvalidInputError("write_feature_csv: " + std::to_string(names.size()) +
                                " names for " + std::to_string(X.cols()) + " columns");
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (std::size_t j = 0; j < names.size(); ++j) f << (j ? "," : "") << names[j];
    if (labels) f << ",label";
    f << "\n";
    for (std::size_t i = 0; i < X.rows(); ++i) {
        for (std::size_t j = 0; j < X.cols(); ++j) f << (j ? "," : "") << format_g17(X(i, j));
        if (labels) f << "," << (*labels)[i];
        f << "\n";
    }
    if (!f) throw IoError("write failed: " + path);
}

struct FeatureCsv {
    std::vector<std::string> names;   // feature columns only
    Matrix X;
    std::vector<int> labels;          // empty when no label column present
};

inline FeatureCsv read_feature_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(f, line)) throw MalformedInputError("empty CSV: " + path);
    FeatureCsv out;
    auto header = csv::split_line(line);
    bool has_label = !header.empty() && header.back() == "label";
    const std::size_t ncols = header.size();
    out.names.assign(header.begin(), has_label ? header.end() - 1 : header.end());
    std::vector<double> values;
    std::size_t nrows = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        auto cells = csv::split_line(line);
        if (cells.size() != ncols)
            throw MalformedInputError(path + ": row " + std::to_string(nrows + 2) + " has " +
                                      std::to_string(cells.size()) + " cells, expected " +
                                      std::to_string(ncols));
        for (std::size_t j = 0; j < out.names.size(); ++j) {
            try {
                values.push_back(std::stod(cells[j]));
            } catch (const std::exception&) {
                throw MalformedInputError(path + ": bad number '" + cells[j] + "' at row " +
                                          std::to_string(nrows + 2));
            }
        }
        if (has_label) {
            const long v = std::stol(cells.back());
            if (v < 0) throw MalformedInputError(path + ": negative label " + std::to_string(v));
            out.labels.push_back(static_cast<int>(v));
        }
        ++nrows;
    }
    out.X = Matrix(nrows, out.names.size());
    std::copy(values.begin(), values.end(), out.X.data().begin());
    return out;
}

inline LabeledDataset dataset_from_csv(const std::string& path) {
    FeatureCsv raw = read_feature_csv(path);
    if (raw.labels.empty()) throw MalformedInputError(path + ": no `label` column");
    LabeledDataset ds;
    ds.X = std::move(raw.X);
    ds.y = std::move(raw.labels);
    ds.class_count = 1 + *std::max_element(ds.y.begin(), ds.y.end());
    if (ds.class_count < 2) ds.class_count = 2;
    ds.validate();
    return ds;
}

}  // namespace mlcv
