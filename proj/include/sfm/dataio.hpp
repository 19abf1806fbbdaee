#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include "sfm/dense.hpp"
#include "sfm/kernels.hpp"
#include "sfm/optim.hpp"
#include "sfm/sparse.hpp"

namespace sfm {

namespace detail {

// Shortest decimal form that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& token, const std::string& context) {
    // from_chars rejects a leading '+', which libsvm labels commonly carry.
    const char* begin = token.data();
    const char* end = token.data() + token.size();
    if (begin != end && *begin == '+') ++begin;
    double v = 0.0;
    const auto res = std::from_chars(begin, end, v);
    if (begin == end || res.ec != std::errc() || res.ptr != end)
        throw std::runtime_error(context + ": bad number '" + token + "'");
    return v;
}

inline std::size_t parse_size(const std::string& token, const std::string& context) {
    std::size_t v = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size())
        throw std::runtime_error(context + ": bad count '" + token + "'");
    return v;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path);
    return in;
}

}  // namespace detail

// libsvm text format: one sample per line, "label idx:val idx:val ..." with
// 1-based strictly ascending feature indices.
inline std::pair<SparseDesignMatrix, std::vector<double>> load_libsvm(
    const std::string& path, std::size_t n_features = 0) {
    auto in = detail::open_in(path);
    std::vector<Triplet> entries;
    std::vector<double> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t max_col = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto err = [&](const std::string& msg) {
            return std::runtime_error(path + ":" + std::to_string(line_no) + ": " + msg);
        };
        std::istringstream ls(line);
        std::string token;
        if (!(ls >> token)) continue;   // blank line
        labels.push_back(detail::parse_double(token, path + ":" + std::to_string(line_no)));
        const std::size_t row = labels.size() - 1;
        std::size_t prev_idx = 0;
        while (ls >> token) {
            const auto colon = token.find(':');
            if (colon == std::string::npos) throw err("expected idx:val, got '" + token + "'");
            std::size_t idx = 0;
            {
                const auto res = std::from_chars(token.data(), token.data() + colon, idx);
                if (res.ec != std::errc() || res.ptr != token.data() + colon || idx == 0)
                    throw err("bad feature index in '" + token + "'");
            }
            if (idx <= prev_idx) throw err("feature indices not ascending");
            prev_idx = idx;
            double val = 0.0;
            {
                const char* begin = token.data() + colon + 1;
                const char* end = token.data() + token.size();
                const auto res = std::from_chars(begin, end, val);
                if (res.ec != std::errc() || res.ptr != end)
                    throw err("bad feature value in '" + token + "'");
            }
            max_col = std::max(max_col, idx);
            if (val != 0.0) entries.push_back({row, idx - 1, val});
        }
    }
    std::size_t d = n_features != 0 ? n_features : max_col;
    if (n_features != 0 && max_col > n_features)
        throw std::runtime_error(path + ": feature index " + std::to_string(max_col)
                                 + " exceeds declared feature count");
    return {SparseDesignMatrix::from_triplets(labels.size(), d, std::move(entries)),
            std::move(labels)};
}

inline void save_libsvm(const SparseDesignMatrix& data, std::span<const double> labels,
                        const std::string& path) {
    if (data.n_rows() != labels.size())
        throw std::invalid_argument("save_libsvm: label count mismatch");
    auto out = detail::open_out(path);
    for (std::size_t n = 0; n < data.n_rows(); ++n) {
        out << detail::format_double(labels[n]);
        const auto x = data.row(n);
        for (std::size_t t = 0; t < x.size(); ++t)
            out << ' ' << (x.indices[t] + 1) << ':' << detail::format_double(x.values[t]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline void save_dense_matrix(const DenseMatrix& W, const std::string& path) {
    auto out = detail::open_out(path);
    out << "dense-matrix 1\n" << W.rows() << ' ' << W.cols() << '\n';
    for (std::size_t i = 0; i < W.rows(); ++i) {
        const auto r = W.row(i);
        for (std::size_t j = 0; j < r.size(); ++j)
            out << (j ? " " : "") << detail::format_double(r[j]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline DenseMatrix load_dense_matrix(const std::string& path) {
    auto in = detail::open_in(path);
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "dense-matrix")
        throw std::runtime_error(path + ": not a dense-matrix file");
    if (version != 1) throw std::runtime_error(path + ": unsupported version");
    std::size_t rows = 0, cols = 0;
    if (!(in >> rows >> cols)) throw std::runtime_error(path + ": missing shape header");
    DenseMatrix W(rows, cols);
    std::string token;
    for (double& v : W.data()) {
        if (!(in >> token)) throw std::runtime_error(path + ": truncated value block");
        v = detail::parse_double(token, path);
    }
    if (in >> token) throw std::runtime_error(path + ": trailing data after value block");
    return W;
}

struct ModelArchive {
    int format_version = 1;
    TrainedModel model;
    std::map<std::string, std::string> hyperparameters;
};

namespace detail {

inline void write_matrix_block(std::ofstream& out, const std::string& name, const DenseMatrix& P) {
    out << name << ' ' << P.rows() << ' ' << P.cols() << '\n';
    for (std::size_t i = 0; i < P.rows(); ++i) {
        const auto r = P.row(i);
        for (std::size_t j = 0; j < r.size(); ++j)
            out << (j ? " " : "") << format_double(r[j]);
        out << '\n';
    }
}

inline DenseMatrix read_matrix_block(std::ifstream& in, const std::string& name,
                                     const std::string& path) {
    std::string key;
    std::size_t rows = 0, cols = 0;
    if (!(in >> key >> rows >> cols) || key != name)
        throw std::runtime_error(path + ": missing field '" + name + "'");
    DenseMatrix P(rows, cols);
    std::string token;
    for (double& v : P.data()) {
        if (!(in >> token)) throw std::runtime_error(path + ": truncated field '" + name + "'");
        v = parse_double(token, path);
    }
    return P;
}

inline void write_vector_block(std::ofstream& out, const std::string& name,
                               std::span<const double> v) {
    out << name << ' ' << v.size() << '\n';
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_double(v[i]);
    out << '\n';
}

inline std::vector<double> read_vector_block(std::ifstream& in, const std::string& name,
                                             const std::string& path) {
    std::string key;
    std::size_t len = 0;
    if (!(in >> key >> len) || key != name)
        throw std::runtime_error(path + ": missing field '" + name + "'");
    std::vector<double> v(len);
    std::string token;
    for (double& x : v) {
        if (!(in >> token)) throw std::runtime_error(path + ": truncated field '" + name + "'");
        x = parse_double(token, path);
    }
    return v;
}

}  // namespace detail

inline void save_model(const ModelArchive& archive, const std::string& path) {
    auto out = detail::open_out(path);
    out << "sfm-model " << archive.format_version << '\n';
    out << "hyper " << archive.hyperparameters.size() << '\n';
    for (const auto& [key, value] : archive.hyperparameters)
        out << key << ' ' << value << '\n';
    if (const auto* fm = std::get_if<FmModel>(&archive.model)) {
        out << "kind fm\n";
        out << "use_linear " << (fm->use_linear ? 1 : 0) << '\n';
        out << "bias " << detail::format_double(fm->bias) << '\n';
        detail::write_vector_block(out, "w", fm->w);
        detail::write_matrix_block(out, "P", fm->P);
    } else if (const auto* hofm = std::get_if<HofmModel>(&archive.model)) {
        out << "kind hofm\n";
        out << "use_linear " << (hofm->use_linear ? 1 : 0) << '\n';
        out << "bias " << detail::format_double(hofm->bias) << '\n';
        detail::write_vector_block(out, "w", hofm->w);
        out << "orders " << hofm->P_by_order.size() << '\n';
        for (std::size_t i = 0; i < hofm->P_by_order.size(); ++i)
            detail::write_matrix_block(out, "P" + std::to_string(i + 2), hofm->P_by_order[i]);
    } else {
        const auto& all = std::get<AllSubsetsModel>(archive.model);
        out << "kind allsubsets\n";
        detail::write_matrix_block(out, "P", all.P);
    }
    out << "end\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline ModelArchive load_model(const std::string& path) {
    auto in = detail::open_in(path);
    std::string magic;
    ModelArchive archive;
    if (!(in >> magic >> archive.format_version) || magic != "sfm-model")
        throw std::runtime_error(path + ": not a model archive");
    if (archive.format_version != 1)
        throw std::runtime_error(path + ": unsupported format version "
                                 + std::to_string(archive.format_version));
    std::string key;
    std::size_t n_hyper = 0;
    if (!(in >> key >> n_hyper) || key != "hyper")
        throw std::runtime_error(path + ": missing field 'hyper'");
    for (std::size_t i = 0; i < n_hyper; ++i) {
        std::string k, v;
        if (!(in >> k >> v)) throw std::runtime_error(path + ": truncated field 'hyper'");
        archive.hyperparameters[k] = v;
    }
    std::string kind;
    if (!(in >> key >> kind) || key != "kind")
        throw std::runtime_error(path + ": missing field 'kind'");
    auto read_flag = [&](const char* name) {
        std::string k;
        int v = 0;
        if (!(in >> k >> v) || k != name)
            throw std::runtime_error(path + ": missing field '" + std::string(name) + "'");
        return v != 0;
    };
    auto read_scalar = [&](const char* name) {
        std::string k, token;
        if (!(in >> k >> token) || k != name)
            throw std::runtime_error(path + ": missing field '" + std::string(name) + "'");
        return detail::parse_double(token, path);
    };
    if (kind == "fm") {
        FmModel m;
        m.use_linear = read_flag("use_linear");
        m.bias = read_scalar("bias");
        m.w = detail::read_vector_block(in, "w", path);
        m.P = detail::read_matrix_block(in, "P", path);
        if (m.P.rows() != m.w.size())
            throw std::runtime_error(path + ": field 'P' row count disagrees with 'w'");
        archive.model = std::move(m);
    } else if (kind == "hofm") {
        HofmModel m;
        m.use_linear = read_flag("use_linear");
        m.bias = read_scalar("bias");
        m.w = detail::read_vector_block(in, "w", path);
        std::size_t orders = 0;
        if (!(in >> key >> orders) || key != "orders")
            throw std::runtime_error(path + ": missing field 'orders'");
        for (std::size_t i = 0; i < orders; ++i)
            m.P_by_order.push_back(
                detail::read_matrix_block(in, "P" + std::to_string(i + 2), path));
        archive.model = std::move(m);
    } else if (kind == "allsubsets") {
        AllSubsetsModel m;
        m.P = detail::read_matrix_block(in, "P", path);
        archive.model = std::move(m);
    } else {
        throw std::runtime_error(path + ": unknown model kind '" + kind + "'");
    }
    if (!(in >> key) || key != "end")
        throw std::runtime_error(path + ": missing field 'end'");
    return archive;
}

}  // namespace sfm
