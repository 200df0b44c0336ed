#include "kinfrac/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace kinfrac {

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw InputError("failed writing '" + path + "'");
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t at = line.find(sep, start);
        if (at == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, at - start));
        start = at + 1;
    }
}

std::vector<std::string> data_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        lines.push_back(line);
    }
    return lines;
}

double parse_double_cell(const std::string& cell, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw InputError("cannot parse numeric cell '" + cell + "' in " + where);
    }
}

}  // namespace

void write_matrix_tsv(const std::string& path,
                      const std::vector<std::string>& sample_ids,
                      const Eigen::MatrixXd& M) {
    const int n = static_cast<int>(sample_ids.size());
    if (M.rows() != n || M.cols() != n)
        throw InputError("matrix dimensions do not match the sample ids");
    std::string out = "sample_id";
    for (const auto& id : sample_ids) {
        out += '\t';
        out += id;
    }
    out += '\n';
    for (int i = 0; i < n; ++i) {
        out += sample_ids[i];
        for (int j = 0; j < n; ++j) {
            out += '\t';
            out += format_double(M(i, j));
        }
        out += '\n';
    }
    write_text_file(path, out);
}

DissimilarityMatrix read_matrix_tsv(const std::string& path) {
    const std::vector<std::string> lines = data_lines(read_text_file(path));
    if (lines.empty()) throw InputError("matrix file '" + path + "' is empty");
    const std::vector<std::string> head = split(lines[0], '\t');
    if (head.size() < 2)
        throw InputError("matrix file '" + path + "' has no sample columns");
    DissimilarityMatrix out;
    out.sample_ids.assign(head.begin() + 1, head.end());
    const int n = static_cast<int>(out.sample_ids.size());
    if (static_cast<int>(lines.size()) != n + 1)
        throw InputError("matrix file '" + path + "' is not square: " +
                         std::to_string(lines.size() - 1) + " rows for " +
                         std::to_string(n) + " columns");
    out.U.resize(n, n);
    for (int i = 0; i < n; ++i) {
        const std::vector<std::string> cells = split(lines[i + 1], '\t');
        if (static_cast<int>(cells.size()) != n + 1)
            throw InputError("ragged row " + std::to_string(i + 1) + " in '" +
                             path + "'");
        if (cells[0] != out.sample_ids[i])
            throw InputError("row/column sample order mismatch at '" +
                             cells[0] + "' in '" + path + "'");
        for (int j = 0; j < n; ++j)
            out.U(i, j) = parse_double_cell(cells[j + 1], path);
    }
    return out;
}

CovariateTable read_covariates_csv(const std::string& path) {
    const std::vector<std::string> lines = data_lines(read_text_file(path));
    if (lines.empty())
        throw InputError("covariate file '" + path + "' is empty");
    const std::vector<std::string> head = split(lines[0], ',');
    if (head.size() < 2)
        throw InputError("covariate file '" + path +
                         "' needs at least one covariate column");
    CovariateTable out;
    out.names.assign(head.begin() + 1, head.end());
    const int m = static_cast<int>(out.names.size());
    const int n = static_cast<int>(lines.size()) - 1;
    out.values.resize(n, m);
    for (int i = 0; i < n; ++i) {
        const std::vector<std::string> cells = split(lines[i + 1], ',');
        if (static_cast<int>(cells.size()) != m + 1)
            throw InputError("ragged covariate row for '" + cells[0] + "'");
        out.sample_ids.push_back(cells[0]);
        for (int j = 0; j < m; ++j)
            out.values(i, j) = parse_double_cell(cells[j + 1], path);
    }
    return out;
}

FamilyTable read_family_csv(const std::string& path) {
    const std::vector<std::string> lines = data_lines(read_text_file(path));
    if (lines.empty()) throw InputError("family file '" + path + "' is empty");
    FamilyTable out;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::vector<std::string> cells = split(lines[i], ',');
        if (cells.size() != 3)
            throw InputError("family file row needs sample_id,family_id,"
                             "zygosity; got '" + lines[i] + "'");
        out.sample_ids.push_back(cells[0]);
        out.family_ids.push_back(cells[1]);
        Zygosity z;
        if (cells[2] == "MZ") z = Zygosity::MZ;
        else if (cells[2] == "DZ") z = Zygosity::DZ;
        else if (cells[2] == "NA") z = Zygosity::Unknown;
        else
            throw InputError("zygosity must be MZ, DZ or NA; got '" +
                             cells[2] + "'");
        auto it = out.zygosity.find(cells[1]);
        if (it != out.zygosity.end() && it->second != z)
            throw InputError("family '" + cells[1] +
                             "' has conflicting zygosity entries");
        out.zygosity[cells[1]] = z;
    }
    return out;
}

void write_embedding_tsv(const std::string& path,
                         const std::vector<std::string>& sample_ids,
                         const Eigen::MatrixXd& coords) {
    const int n = static_cast<int>(sample_ids.size());
    if (coords.rows() != n)
        throw InputError("embedding rows do not match the sample ids");
    std::string out = "sample_id";
    for (int j = 0; j < coords.cols(); ++j)
        out += "\tcoord_" + std::to_string(j + 1);
    out += '\n';
    for (int i = 0; i < n; ++i) {
        out += sample_ids[i];
        for (int j = 0; j < coords.cols(); ++j) {
            out += '\t';
            out += format_double(coords(i, j));
        }
        out += '\n';
    }
    write_text_file(path, out);
}

}  // namespace kinfrac
