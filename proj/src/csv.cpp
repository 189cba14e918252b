#include "fedmim/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <vector>

namespace fedmim {
namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& cell) {
    const std::string t = trim(cell);
    if (t.empty()) {
        return std::nullopt;
    }
    const char* first = t.data();
    if (*first == '+') {
        ++first;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

}  // namespace

void standardize(Dataset& data) {
    for (std::size_t j = 0; j < data.d; ++j) {
        double mu = 0.0;
        for (std::size_t s = 0; s < data.n; ++s) {
            mu += data.features[s * data.d + j];
        }
        mu /= static_cast<double>(data.n);
        double var = 0.0;
        for (std::size_t s = 0; s < data.n; ++s) {
            const double c = data.features[s * data.d + j] - mu;
            var += c * c;
        }
        var /= static_cast<double>(data.n);
        const double sd = std::sqrt(var);
        for (std::size_t s = 0; s < data.n; ++s) {
            double& v = data.features[s * data.d + j];
            v = sd > 0.0 ? (v - mu) / sd : 0.0;
        }
    }
}

Dataset ingest_csv(const std::filesystem::path& path, const std::string& label_column) {
    std::ifstream in(path);
    if (!in) {
        throw CsvError(path.string() + ": cannot open file");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw CsvError(path.string() + ": empty file (missing header row)");
    }
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        line.erase(0, 3);
    }
    std::vector<std::string> header = split_line(line);
    for (auto& h : header) {
        h = trim(h);
    }
    const auto label_it = std::find(header.begin(), header.end(), label_column);
    if (label_it == header.end()) {
        throw CsvError(path.string() + ": missing label column '" + label_column + "'");
    }
    const auto label_idx = static_cast<std::size_t>(label_it - header.begin());

    Dataset data;
    data.d = header.size() - 1;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j != label_idx) {
            data.feature_names.push_back(header[j]);
        }
    }

    std::vector<std::string> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || trim(line) == "\r") {
            continue;
        }
        const auto cells = split_line(line);
        if (cells.size() != header.size()) {
            throw CsvError(path.string() + ": line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
        }
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (j == label_idx) {
                const std::string l = trim(cells[j]);
                if (l.empty()) {
                    throw CsvError(path.string() + ": line " + std::to_string(line_no) + ": empty label in column '" +
                                   header[j] + "'");
                }
                raw_labels.push_back(l);
                continue;
            }
            const auto v = parse_double(cells[j]);
            if (!v) {
                throw CsvError(path.string() + ": line " + std::to_string(line_no) + ": non-numeric cell '" +
                               trim(cells[j]) + "' in column '" + header[j] + "'");
            }
            data.features.push_back(*v);
        }
        ++data.n;
    }
    if (data.n == 0) {
        throw CsvError(path.string() + ": no data rows");
    }

    std::vector<std::string> distinct = raw_labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const bool numeric = std::all_of(distinct.begin(), distinct.end(),
                                     [](const std::string& s) { return parse_double(s).has_value(); });
    if (numeric) {
        std::stable_sort(distinct.begin(), distinct.end(), [](const std::string& a, const std::string& b) {
            return *parse_double(a) < *parse_double(b);
        });
    }
    std::map<std::string, int> code;
    for (std::size_t c = 0; c < distinct.size(); ++c) {
        code.emplace(distinct[c], static_cast<int>(c));
    }
    for (const auto& l : raw_labels) {
        data.labels.push_back(code.at(l));
    }
    standardize(data);
    return data;
}

void write_csv(const std::filesystem::path& path, const Dataset& data, const std::string& label_column) {
    std::FILE* f = std::fopen(path.string().c_str(), "w");
    if (f == nullptr) {
        throw CsvError(path.string() + ": cannot open for writing");
    }
    for (std::size_t j = 0; j < data.d; ++j) {
        const std::string name = j < data.feature_names.size() ? data.feature_names[j] : "x" + std::to_string(j);
        std::fprintf(f, "%s,", name.c_str());
    }
    std::fprintf(f, "%s\n", label_column.c_str());
    for (std::size_t s = 0; s < data.n; ++s) {
        for (std::size_t j = 0; j < data.d; ++j) {
            std::fprintf(f, "%.17g,", data.features[s * data.d + j]);
        }
        std::fprintf(f, "%d\n", data.labels[s]);
    }
    if (std::fclose(f) != 0) {
        throw CsvError(path.string() + ": write failed");
    }
}

}  // namespace fedmim
