#include "alphabox/harness/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace alphabox::harness {

std::size_t Dataset::output_dim() const {
    return task == Task::classification ? num_classes : static_cast<std::size_t>(targets.cols());
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.task = task;
    out.num_classes = num_classes;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
    if (task == Task::regression) out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(rows[i]);
        if (rows[i] >= size()) throw InvalidArgument("subset row out of range");
        out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(r);
        if (task == Task::regression)
            out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(r);
        else
            out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

Batch Dataset::batch(const std::vector<std::size_t>& rows) const {
    Dataset d = subset(rows);
    return Batch{std::move(d.inputs), std::move(d.targets), std::move(d.labels)};
}

namespace {

bool parse_row(const std::string& line, std::vector<double>& out, std::size_t& bad_col) {
    out.clear();
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
        const auto b = cell.find_first_not_of(" \t\r");
        const auto e = cell.find_last_not_of(" \t\r");
        const std::string t = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(t, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (t.empty() || used != t.size() || !std::isfinite(v)) {
            bad_col = col;
            return false;
        }
        out.push_back(v);
        ++col;
    }
    if (!line.empty() && line.back() == ',') {
        bad_col = col;
        return false;
    }
    return true;
}

} // namespace

Dataset parse_csv_regression(const std::string& text, const std::string& source) {
    std::stringstream in(text);
    std::string line;
    std::vector<std::vector<double>> rows;
    std::vector<double> row;
    std::size_t line_no = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::size_t bad_col = 0;
        if (!parse_row(line, row, bad_col)) {
            if (first) {
                first = false;
                continue;  // header
            }
            throw InvalidArgument(source + ": non-numeric cell at row " + std::to_string(line_no) +
                                  ", column " + std::to_string(bad_col + 1));
        }
        first = false;
        if (!rows.empty() && row.size() != rows.front().size())
            throw InvalidArgument(source + ": row " + std::to_string(line_no) + " has " +
                                  std::to_string(row.size()) + " columns, expected " +
                                  std::to_string(rows.front().size()));
        rows.push_back(row);
    }
    if (rows.empty()) throw InvalidArgument(source + ": empty file");
    const std::size_t cols = rows.front().size();
    if (cols < 2) throw InvalidArgument(source + ": need at least one feature and one target column");

    Dataset d;
    d.task = Task::regression;
    d.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols - 1));
    d.targets.resize(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j + 1 < cols; ++j)
            d.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        d.targets(static_cast<Eigen::Index>(i), 0) = rows[i].back();
    }
    return d;
}

Dataset load_csv_regression(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidArgument("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_csv_regression(ss.str(), path);
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot open " + path);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& b, std::size_t pos) {
    return (std::uint32_t{b[pos]} << 24) | (std::uint32_t{b[pos + 1]} << 16) |
           (std::uint32_t{b[pos + 2]} << 8) | std::uint32_t{b[pos + 3]};
}

void put_be32(std::ofstream& f, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    f.write(b, 4);
}

} // namespace

Matrix load_idx_images(const std::string& path) {
    const auto b = read_file(path);
    if (b.size() < 16) throw InvalidArgument(path + ": truncated IDX header");
    if (read_be32(b, 0) != 0x00000803) throw InvalidArgument(path + ": bad IDX image magic number");
    const std::size_t n = read_be32(b, 4), rows = read_be32(b, 8), cols = read_be32(b, 12);
    const std::size_t dim = rows * cols;
    if (b.size() != 16 + n * dim)
        throw InvalidArgument(path + ": IDX length mismatch (header says " + std::to_string(n) +
                              " images of " + std::to_string(dim) + " pixels)");
    Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < n * dim; ++i) x.data()[i] = static_cast<double>(b[16 + i]) / 255.0;
    return x;
}

std::vector<std::size_t> load_idx_labels(const std::string& path) {
    const auto b = read_file(path);
    if (b.size() < 8) throw InvalidArgument(path + ": truncated IDX header");
    if (read_be32(b, 0) != 0x00000801) throw InvalidArgument(path + ": bad IDX label magic number");
    const std::size_t n = read_be32(b, 4);
    if (b.size() != 8 + n) throw InvalidArgument(path + ": IDX length mismatch");
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = b[8 + i];
        if (labels[i] > 9) throw InvalidArgument(path + ": label out of range at " + std::to_string(i));
    }
    return labels;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    Dataset d;
    d.task = Task::classification;
    d.num_classes = 10;
    d.inputs = load_idx_images(images_path);
    d.labels = load_idx_labels(labels_path);
    if (d.labels.size() != d.size())
        throw InvalidArgument("image and label counts differ: " + std::to_string(d.size()) + " vs " +
                              std::to_string(d.labels.size()));
    return d;
}

void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols) {
    if (pixels.size() != std::size_t{count} * rows * cols) throw InvalidArgument("pixel count mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + path);
    put_be32(f, 0x00000803);
    put_be32(f, count);
    put_be32(f, rows);
    put_be32(f, cols);
    f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidArgument("cannot write " + path);
    put_be32(f, 0x00000801);
    put_be32(f, static_cast<std::uint32_t>(labels.size()));
    f.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

namespace {

void column_stats(const Matrix& m, Vector& mean, Vector& sd) {
    const auto n = static_cast<double>(m.rows());
    mean = m.colwise().mean().transpose();
    sd.resize(m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const double var = (m.col(j).array() - mean[j]).square().sum() / n;
        sd[j] = var > 0.0 ? std::sqrt(var) : 1.0;
    }
}

} // namespace

Standardizer Standardizer::fit(const Dataset& train) {
    if (train.size() == 0) throw InvalidArgument("cannot standardise an empty dataset");
    Standardizer s;
    column_stats(train.inputs, s.input_mean, s.input_std);
    if (train.task == Task::regression) column_stats(train.targets, s.target_mean, s.target_std);
    return s;
}

Dataset Standardizer::apply(const Dataset& d) const {
    Dataset out = d;
    out.inputs = ((d.inputs.rowwise() - input_mean.transpose()).array().rowwise() /
                  input_std.transpose().array()).matrix();
    if (d.task == Task::regression && target_mean.size() > 0)
        out.targets = ((d.targets.rowwise() - target_mean.transpose()).array().rowwise() /
                       target_std.transpose().array()).matrix();
    return out;
}

double Standardizer::log_target_scale() const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < target_std.size(); ++i) s += std::log(target_std[i]);
    return s;
}

Split random_split(std::uint64_t seed, std::size_t n, double test_fraction) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw InvalidArgument("test_fraction must lie in (0, 1)");
    RngStream rng(seed);
    auto perm = random_permutation(rng, n);
    const auto n_train = static_cast<std::size_t>(std::floor((1.0 - test_fraction) * static_cast<double>(n)));
    if (n_train == 0 || n_train == n) throw InvalidArgument("split leaves an empty side");
    Split s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    return s;
}

} // namespace alphabox::harness
