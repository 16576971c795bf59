#include "dyadflow/io.hpp"

#include "dyadflow/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace dyadflow {

using json = nlohmann::json;

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string &line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::ofstream open_out(const fs::path &path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

json read_json(const fs::path &path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path.string());
    try {
        return json::parse(is);
    } catch (const json::exception &e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

void write_json(const fs::path &path, const json &j) {
    auto os = open_out(path);
    os << j.dump(2) << '\n';
}

std::unordered_map<std::string, Index> id_lookup(const std::vector<std::string> &ids) {
    std::unordered_map<std::string, Index> m;
    for (std::size_t k = 0; k < ids.size(); ++k) m.emplace(ids[k], static_cast<Index>(k));
    return m;
}

std::vector<std::string> numbered(const std::string &prefix, Index count) {
    std::vector<std::string> h;
    for (Index k = 0; k < count; ++k) h.push_back(prefix + std::to_string(k + 1));
    return h;
}

void write_matrix_rows(const fs::path &path, std::vector<std::string> header, const std::vector<std::string> &lead_name,
                       const std::vector<std::vector<std::string>> &lead, const Eigen::MatrixXd &M) {
    std::vector<std::string> full = lead_name;
    full.insert(full.end(), header.begin(), header.end());
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(M.rows()));
    for (Index r = 0; r < M.rows(); ++r) {
        std::vector<std::string> row = lead.empty() ? std::vector<std::string>{} : lead[static_cast<std::size_t>(r)];
        for (Index c = 0; c < M.cols(); ++c) row.push_back(format_double(M(r, c)));
        rows.push_back(std::move(row));
    }
    write_csv(path, full, rows);
}

Eigen::MatrixXd numeric_block(const CsvTable &t, std::size_t first_col) {
    const auto rows = static_cast<Index>(t.rows.size());
    const auto cols = static_cast<Index>(t.header.size() - first_col);
    Eigen::MatrixXd M(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c)
            M(r, c) = t.number(static_cast<std::size_t>(r), first_col + static_cast<std::size_t>(c));
    return M;
}

void expect_rows(const CsvTable &t, long rows) {
    if (static_cast<long>(t.rows.size()) != rows)
        throw ParseError(t.file, static_cast<long>(t.rows.size()) + 2,
                         "expected " + std::to_string(rows) + " data rows, found " + std::to_string(t.rows.size()));
}

}  // namespace

std::size_t CsvTable::column(const std::string &name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ParseError(file, 1, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
}

double CsvTable::number(std::size_t row, std::size_t col) const {
    return parse_double(rows[row][col], file, static_cast<long>(row) + 2);
}

CsvTable read_csv(const fs::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    CsvTable t;
    t.file = path.string();
    std::string line;
    long row = 0;
    while (std::getline(is, line)) {
        ++row;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (t.header.empty()) {
            t.header = std::move(fields);
            continue;
        }
        if (fields.size() != t.header.size())
            throw ParseError(t.file, row,
                             "expected " + std::to_string(t.header.size()) + " fields, found " +
                                 std::to_string(fields.size()));
        t.rows.push_back(std::move(fields));
    }
    if (t.header.empty()) throw ParseError(t.file, 1, "empty file");
    return t;
}

void write_csv(const fs::path &path, const std::vector<std::string> &header,
               const std::vector<std::vector<std::string>> &rows) {
    auto os = open_out(path);
    auto line = [&](const std::vector<std::string> &f) {
        for (std::size_t k = 0; k < f.size(); ++k) {
            if (k) os << ',';
            os << f[k];
        }
        os << '\n';
    };
    line(header);
    for (const auto &r : rows) line(r);
    if (!os) throw IoError("write failed for " + path.string());
}

std::string format_double(double v) {
    if (std::isnan(v)) return "NA";
    if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string &text, const std::string &file, long row) {
    if (text == "NA" || text == "NaN" || text == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (text == "Inf") return std::numeric_limits<double>::infinity();
    if (text == "-Inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char *b = text.data();
    const char *e = b + text.size();
    if (!text.empty() && *b == '+') ++b;
    const auto res = std::from_chars(b, e, v);
    if (text.empty() || res.ec != std::errc() || res.ptr != e)
        throw ParseError(file, row, "not a number: '" + text + "'");
    return v;
}

NodeSet read_nodes(const fs::path &path) {
    const auto t = read_csv(path);
    if (t.header.size() < 3 || t.header[0] != "id" || t.header[1] != "x" || t.header[2] != "y")
        throw ParseError(t.file, 1, "header must start with id,x,y");
    NodeSet nodes;
    const auto n = static_cast<Index>(t.rows.size());
    nodes.coords.resize(n, 2);
    nodes.covariates.resize(n, static_cast<Index>(t.header.size() - 3));
    nodes.covariate_names.assign(t.header.begin() + 3, t.header.end());
    for (Index i = 0; i < n; ++i) {
        const auto r = static_cast<std::size_t>(i);
        nodes.ids.push_back(t.rows[r][0]);
        nodes.coords(i, 0) = t.number(r, 1);
        nodes.coords(i, 1) = t.number(r, 2);
        for (Index k = 0; k < nodes.covariates.cols(); ++k)
            nodes.covariates(i, k) = t.number(r, 3 + static_cast<std::size_t>(k));
    }
    try {
        nodes.validate();
    } catch (const InvalidInput &e) {
        throw ParseError(t.file, 0, e.what());
    }
    return nodes;
}

void write_nodes(const fs::path &path, const NodeSet &nodes) {
    std::vector<std::string> header{"id", "x", "y"};
    header.insert(header.end(), nodes.covariate_names.begin(), nodes.covariate_names.end());
    std::vector<std::vector<std::string>> rows;
    for (Index i = 0; i < nodes.size(); ++i) {
        std::vector<std::string> r{nodes.ids[static_cast<std::size_t>(i)], format_double(nodes.coords(i, 0)),
                                   format_double(nodes.coords(i, 1))};
        for (Index k = 0; k < nodes.covariates.cols(); ++k) r.push_back(format_double(nodes.covariates(i, k)));
        rows.push_back(std::move(r));
    }
    write_csv(path, header, rows);
}

Eigen::MatrixXi read_node_matrix(const fs::path &path, const std::vector<std::string> &ids) {
    const auto t = read_csv(path);
    const auto n = static_cast<Index>(ids.size());
    if (t.header.size() != ids.size() + 1) throw ParseError(t.file, 1, "expected id plus one column per node");
    const auto lookup = id_lookup(ids);
    std::vector<Index> col_of(ids.size());
    for (std::size_t c = 1; c < t.header.size(); ++c) {
        const auto it = lookup.find(t.header[c]);
        if (it == lookup.end()) throw ParseError(t.file, 1, "unknown node id '" + t.header[c] + "'");
        col_of[c - 1] = it->second;
    }
    if (static_cast<Index>(t.rows.size()) != n) throw ParseError(t.file, static_cast<long>(t.rows.size()) + 1, "expected one row per node");
    Eigen::MatrixXi M = Eigen::MatrixXi::Constant(n, n, -1);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto it = lookup.find(t.rows[r][0]);
        if (it == lookup.end()) throw ParseError(t.file, static_cast<long>(r) + 2, "unknown node id '" + t.rows[r][0] + "'");
        for (std::size_t c = 1; c < t.header.size(); ++c) {
            const double v = t.number(r, c);
            if (!(v >= 0.0) || v != std::floor(v) || v > 2e9)
                throw ParseError(t.file, static_cast<long>(r) + 2, "entries must be non-negative integers");
            M(it->second, col_of[c - 1]) = static_cast<int>(v);
        }
    }
    if ((M.array() < 0).any()) throw ParseError(t.file, 0, "matrix rows do not cover every node");
    if (M != M.transpose()) throw ParseError(t.file, 0, "matrix is not symmetric");
    return M;
}

void write_node_matrix(const fs::path &path, const std::vector<std::string> &ids, const Eigen::MatrixXi &m) {
    std::vector<std::string> header{"id"};
    header.insert(header.end(), ids.begin(), ids.end());
    std::vector<std::vector<std::string>> rows;
    for (Index i = 0; i < m.rows(); ++i) {
        std::vector<std::string> r{ids[static_cast<std::size_t>(i)]};
        for (Index j = 0; j < m.cols(); ++j) r.push_back(std::to_string(m(i, j)));
        rows.push_back(std::move(r));
    }
    write_csv(path, header, rows);
}

DyadicResponse read_responses(const fs::path &path, const std::vector<std::string> &ids) {
    const auto t = read_csv(path);
    const auto ci = t.column("id_i");
    const auto cj = t.column("id_j");
    const auto cy = t.column("y");
    const auto hd = std::find(t.header.begin(), t.header.end(), "d");
    const auto hm = std::find(t.header.begin(), t.header.end(), "M");
    const bool counts = hd != t.header.end() && hm != t.header.end();
    const auto n = static_cast<Index>(ids.size());
    const DyadIndex idx(n);
    const auto lookup = id_lookup(ids);
    DyadicResponse r;
    r.values = Eigen::VectorXd::Zero(idx.size());
    r.observed = Eigen::VectorXd::Zero(idx.size());
    Eigen::VectorXi d = Eigen::VectorXi::Zero(idx.size());
    Eigen::VectorXi M = Eigen::VectorXi::Zero(idx.size());
    std::vector<char> seen(static_cast<std::size_t>(idx.size()), 0);
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
        const long row = static_cast<long>(k) + 2;
        const auto a = lookup.find(t.rows[k][ci]);
        const auto b = lookup.find(t.rows[k][cj]);
        if (a == lookup.end() || b == lookup.end()) throw ParseError(t.file, row, "unknown node id");
        if (a->second == b->second) throw ParseError(t.file, row, "self pair");
        const Index pos = idx.position(a->second, b->second);
        if (seen[static_cast<std::size_t>(pos)]) throw ParseError(t.file, row, "duplicate pair");
        seen[static_cast<std::size_t>(pos)] = 1;
        const double y = t.number(k, cy);
        if (std::isfinite(y)) {
            r.values[pos] = y;
            r.observed[pos] = 1.0;
        }
        if (counts) {
            d[pos] = static_cast<int>(t.number(k, static_cast<std::size_t>(hd - t.header.begin())));
            M[pos] = static_cast<int>(t.number(k, static_cast<std::size_t>(hm - t.header.begin())));
        }
    }
    if (counts) {
        r.mismatches = d;
        r.comparable = M;
    }
    return r;
}

void write_responses(const fs::path &path, const std::vector<std::string> &ids, const DyadicResponse &response) {
    const DyadIndex idx(static_cast<Index>(ids.size()));
    const bool counts = response.mismatches && response.comparable;
    std::vector<std::string> header{"id_i", "id_j", "y"};
    if (counts) {
        header.emplace_back("d");
        header.emplace_back("M");
    }
    std::vector<std::vector<std::string>> rows;
    for (Index a = 0; a < idx.size(); ++a) {
        const auto [i, j] = idx[a];
        std::vector<std::string> r{ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)],
                                   response.observed[a] > 0.0 ? format_double(response.values[a]) : "NA"};
        if (counts) {
            r.push_back(std::to_string((*response.mismatches)[a]));
            r.push_back(std::to_string((*response.comparable)[a]));
        }
        rows.push_back(std::move(r));
    }
    write_csv(path, header, rows);
}

std::vector<PathwayClass> read_pathways(const fs::path &path) {
    const json j = read_json(path);
    std::vector<PathwayClass> out;
    try {
        for (const auto &c : j.at("classes")) {
            PathwayClass pc;
            pc.name = c.at("name").get<std::string>();
            pc.tau = c.at("tau").get<double>();
            for (const auto &f : c.at("features")) {
                Eigen::MatrixX2d poly(static_cast<Index>(f.size()), 2);
                for (std::size_t v = 0; v < f.size(); ++v) {
                    poly(static_cast<Index>(v), 0) = f.at(v).at(0).get<double>();
                    poly(static_cast<Index>(v), 1) = f.at(v).at(1).get<double>();
                }
                pc.features.push_back(poly);
            }
            pc.validate();
            out.push_back(std::move(pc));
        }
    } catch (const json::exception &e) {
        throw ParseError(path.string(), 0, e.what());
    } catch (const InvalidInput &e) {
        throw ParseError(path.string(), 0, e.what());
    }
    return out;
}

void write_pathways(const fs::path &path, const std::vector<PathwayClass> &pathways) {
    json classes = json::array();
    for (const auto &pc : pathways) {
        json feats = json::array();
        for (const auto &f : pc.features) {
            json poly = json::array();
            for (Index v = 0; v < f.rows(); ++v) poly.push_back({f(v, 0), f(v, 1)});
            feats.push_back(poly);
        }
        classes.push_back({{"name", pc.name}, {"tau", pc.tau}, {"features", feats}});
    }
    write_json(path, json{{"classes", classes}});
}

Eigen::MatrixXd read_grid_covariates(const fs::path &path, const GridSpec &grid, Index expected_covariates) {
    const NodeSet g = read_nodes(path);
    if (g.size() != grid.size())
        throw InvalidInput(path.string() + ": expected " + std::to_string(grid.size()) + " grid nodes, found " +
                           std::to_string(g.size()));
    if (g.covariates.cols() != expected_covariates)
        throw InvalidInput(path.string() + ": expected " + std::to_string(expected_covariates) + " covariates");
    const double tol = 1e-9 * std::max({1.0, std::abs(grid.box.xmax), std::abs(grid.box.ymax), std::abs(grid.box.xmin),
                                        std::abs(grid.box.ymin)});
    if (((g.coords - grid.coords).array().abs() > tol).any())
        throw InvalidInput(path.string() + ": grid node coordinates must follow the lattice order (x fastest)");
    return g.covariates;
}

void save_chain(const fs::path &dir, const ChainOutput &chain) {
    fs::create_directories(dir);
    const auto &m = chain.meta;
    json meta{{"schema_version", kChainSchemaVersion},
              {"software_version", m.software_version},
              {"variant", to_string(m.variant)},
              {"seed", m.seed},
              {"iterations", m.iterations},
              {"burnin", m.burnin},
              {"thin", m.thin},
              {"factor_every", m.factor_every},
              {"nodes", m.nodes},
              {"dyads", m.dyads},
              {"P", m.P},
              {"Q", m.Q},
              {"draws", chain.draws()},
              {"eta_kernel", to_string(m.eta_kernel)},
              {"factor_kernel", to_string(m.factor_kernel)},
              {"node_nugget", m.node_nugget},
              {"joint_acceptance", m.joint_acceptance},
              {"slice_updates", m.slice_updates},
              {"slice_evaluations", m.slice_evaluations},
              {"jitter_events", m.jitter_events},
              {"scale_clamps", m.scale_clamps},
              {"cg_solves", m.cg_solves},
              {"cg_iterations", m.cg_iterations},
              {"cg_fallbacks", m.cg_fallbacks},
              {"jitter_log", m.jitter_log},
              {"factor_draws", chain.factor_draw}};
    write_json(dir / "meta.json", meta);

    std::vector<std::vector<std::string>> iters;
    for (const long t : chain.iteration) iters.push_back({std::to_string(t)});
    Eigen::MatrixXd scal(chain.draws(), 4);
    scal << chain.alpha, chain.sigma2, chain.sigma2_eta, chain.phi_eta;
    write_matrix_rows(dir / "scalars.csv", {"alpha", "sigma2", "sigma2_eta", "phi_eta"}, {"iteration"}, iters, scal);
    write_matrix_rows(dir / "beta.csv", numbered("beta_", m.P), {"iteration"}, iters, chain.beta);
    write_matrix_rows(dir / "eta.csv", numbered("eta_", m.nodes), {"iteration"}, iters, chain.eta);
    if (m.Q == 0) return;
    write_matrix_rows(dir / "phi_q.csv", numbered("phi_", m.Q), {"iteration"}, iters, chain.phi_q);
    write_matrix_rows(dir / "xi.csv", numbered("xi_", m.Q), {"iteration"}, iters, chain.xi);

    const auto S = static_cast<Index>(chain.factor_draw.size());
    std::vector<std::vector<std::string>> lead;
    for (Index s = 0; s < S; ++s)
        for (Index q = 0; q < m.Q; ++q)
            lead.push_back({std::to_string(chain.factor_draw[static_cast<std::size_t>(s)]), std::to_string(q + 1)});
    Eigen::MatrixXd Wl(S * m.Q, m.dyads), Dl(S * m.Q, m.nodes), Cl(S * m.Q, m.P);
    for (Index s = 0; s < S; ++s)
        for (Index q = 0; q < m.Q; ++q) {
            Wl.row(s * m.Q + q) = chain.W[static_cast<std::size_t>(s)].col(q).transpose();
            Dl.row(s * m.Q + q) = chain.W_diag[static_cast<std::size_t>(s)].col(q).transpose();
            Cl.row(s * m.Q + q) = chain.C_load[static_cast<std::size_t>(s)].col(q).transpose();
        }
    write_matrix_rows(dir / "W.csv", numbered("w_", m.dyads), {"draw", "factor"}, lead, Wl);
    write_matrix_rows(dir / "W_diag.csv", numbered("d_", m.nodes), {"draw", "factor"}, lead, Dl);
    write_matrix_rows(dir / "C_load.csv", numbered("c_", m.P), {"draw", "factor"}, lead, Cl);

    Eigen::MatrixXd ds(m.dyads, 2 * m.P);
    ds << chain.delta_mean, chain.delta_sd;
    auto header = numbered("mean_", m.P);
    const auto sdh = numbered("sd_", m.P);
    header.insert(header.end(), sdh.begin(), sdh.end());
    write_matrix_rows(dir / "delta_summary.csv", header, {}, {}, ds);
}

ChainOutput load_chain(const fs::path &dir) {
    const json meta = read_json(dir / "meta.json");
    ChainOutput c;
    try {
        const int version = meta.at("schema_version").get<int>();
        if (version != kChainSchemaVersion) throw SchemaMismatch(version, kChainSchemaVersion);
        auto &m = c.meta;
        m.schema_version = version;
        m.software_version = meta.at("software_version").get<std::string>();
        m.variant = model_variant_from_string(meta.at("variant").get<std::string>());
        m.seed = meta.at("seed").get<std::uint64_t>();
        m.iterations = meta.at("iterations").get<long>();
        m.burnin = meta.at("burnin").get<long>();
        m.thin = meta.at("thin").get<long>();
        m.factor_every = meta.at("factor_every").get<long>();
        m.nodes = meta.at("nodes").get<Index>();
        m.dyads = meta.at("dyads").get<Index>();
        m.P = meta.at("P").get<Index>();
        m.Q = meta.at("Q").get<Index>();
        m.eta_kernel = kernel_family_from_string(meta.at("eta_kernel").get<std::string>());
        m.factor_kernel = kernel_family_from_string(meta.at("factor_kernel").get<std::string>());
        m.node_nugget = meta.at("node_nugget").get<double>();
        m.joint_acceptance = meta.at("joint_acceptance").get<std::vector<double>>();
        m.slice_updates = meta.at("slice_updates").get<long>();
        m.slice_evaluations = meta.at("slice_evaluations").get<long>();
        m.jitter_events = meta.at("jitter_events").get<long>();
        m.scale_clamps = meta.at("scale_clamps").get<long>();
        m.cg_solves = meta.at("cg_solves").get<long>();
        m.cg_iterations = meta.at("cg_iterations").get<long>();
        m.cg_fallbacks = meta.at("cg_fallbacks").get<long>();
        m.jitter_log = meta.at("jitter_log").get<std::vector<std::string>>();
        c.factor_draw = meta.at("factor_draws").get<std::vector<long>>();
    } catch (const json::exception &e) {
        throw ParseError((dir / "meta.json").string(), 0, e.what());
    }
    const long D = meta.at("draws").get<long>();
    const auto &m = c.meta;

    const auto sc = read_csv(dir / "scalars.csv");
    expect_rows(sc, D);
    if (sc.header.size() != 5) throw ParseError(sc.file, 1, "expected 5 columns");
    for (std::size_t r = 0; r < sc.rows.size(); ++r) c.iteration.push_back(static_cast<long>(sc.number(r, 0)));
    const Eigen::MatrixXd s = numeric_block(sc, 1);
    c.alpha = s.col(0);
    c.sigma2 = s.col(1);
    c.sigma2_eta = s.col(2);
    c.phi_eta = s.col(3);
    auto block = [&](const char *name, Index cols, long rows) {
        const auto t = read_csv(dir / name);
        expect_rows(t, rows);
        if (static_cast<Index>(t.header.size()) != cols + 1) throw ParseError(t.file, 1, "unexpected column count");
        return numeric_block(t, 1);
    };
    c.beta = block("beta.csv", m.P, D);
    c.eta = block("eta.csv", m.nodes, D);
    c.phi_q.resize(D, m.Q);
    c.xi.resize(D, m.Q);
    c.delta_mean.resize(m.dyads, 0);
    c.delta_sd.resize(m.dyads, 0);
    if (m.Q == 0) return c;
    c.phi_q = block("phi_q.csv", m.Q, D);
    c.xi = block("xi.csv", m.Q, D);
    const auto S = static_cast<long>(c.factor_draw.size());
    auto factor_block = [&](const char *name, Index cols) {
        const auto t = read_csv(dir / name);
        expect_rows(t, S * m.Q);
        if (static_cast<Index>(t.header.size()) != cols + 2) throw ParseError(t.file, 1, "unexpected column count");
        return numeric_block(t, 2);
    };
    const Eigen::MatrixXd Wl = factor_block("W.csv", m.dyads);
    const Eigen::MatrixXd Dl = factor_block("W_diag.csv", m.nodes);
    const Eigen::MatrixXd Cl = factor_block("C_load.csv", m.P);
    for (long k = 0; k < S; ++k) {
        Eigen::MatrixXd W(m.dyads, m.Q), Wd(m.nodes, m.Q), C(m.P, m.Q);
        for (Index q = 0; q < m.Q; ++q) {
            W.col(q) = Wl.row(k * m.Q + q).transpose();
            Wd.col(q) = Dl.row(k * m.Q + q).transpose();
            C.col(q) = Cl.row(k * m.Q + q).transpose();
        }
        c.W.push_back(W);
        c.W_diag.push_back(Wd);
        c.C_load.push_back(C);
    }
    const auto dt = read_csv(dir / "delta_summary.csv");
    expect_rows(dt, m.dyads);
    const Eigen::MatrixXd ds = numeric_block(dt, 0);
    if (ds.cols() != 2 * m.P) throw ParseError(dt.file, 1, "unexpected column count");
    c.delta_mean = ds.leftCols(m.P);
    c.delta_sd = ds.rightCols(m.P);
    return c;
}

void write_truth(const fs::path &dir, const SimTruth &t) {
    auto vec = [](const Eigen::VectorXd &v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    json j{{"seed", t.seed},
           {"alpha", t.alpha},
           {"beta", vec(t.beta)},
           {"sigma2", t.sigma2},
           {"sigma2_eta", t.sigma2_eta},
           {"phi_eta", t.phi_eta},
           {"phi_q", vec(t.phi_q)},
           {"xi", vec(t.xi)},
           {"eta", vec(t.eta)}};
    write_json(dir / "truth.json", j);
    const DyadIndex idx(t.nodes.size());
    std::vector<std::vector<std::string>> lead;
    for (const auto &d : idx.pairs())
        lead.push_back({t.nodes.ids[static_cast<std::size_t>(d.i)], t.nodes.ids[static_cast<std::size_t>(d.j)]});
    write_matrix_rows(dir / "truth_delta.csv", numbered("delta_", t.delta.cols()), {"id_i", "id_j"}, lead, t.delta);
}

std::vector<std::pair<std::string, double>> read_truth(const fs::path &path) {
    const json j = read_json(path);
    std::vector<std::pair<std::string, double>> out;
    try {
        out.emplace_back("alpha", j.at("alpha").get<double>());
        const auto beta = j.at("beta").get<std::vector<double>>();
        for (std::size_t k = 0; k < beta.size(); ++k) out.emplace_back("beta_" + std::to_string(k + 1), beta[k]);
        out.emplace_back("sigma2", j.at("sigma2").get<double>());
        out.emplace_back("sigma2_eta", j.at("sigma2_eta").get<double>());
        out.emplace_back("phi_eta", j.at("phi_eta").get<double>());
    } catch (const json::exception &e) {
        throw ParseError(path.string(), 0, e.what());
    }
    return out;
}

void write_score(const fs::path &dir, const ScoreReport &rep, const ModelData &data,
                 const std::vector<std::string> &ids) {
    fs::create_directories(dir);
    json diag = json::array();
    for (const auto &d : rep.diagnostics)
        diag.push_back({{"parameter", d.parameter},
                        {"rhat", d.result.rhat},
                        {"ess", d.result.ess},
                        {"degenerate", d.result.degenerate}});
    json cov = json::array();
    for (const auto &c : rep.coverage) cov.push_back({{"parameter", c.parameter}, {"covered", c.covered}});
    json kin{{"mean_abs_residual", rep.kinship.mean_abs_residual},
             {"near_clonal_count", rep.kinship.near_clonal_count}};
    if (rep.kinship.mean_abs_residual_near_clonal)
        kin["mean_abs_residual_near_clonal"] = *rep.kinship.mean_abs_residual_near_clonal;
    write_json(dir / "score.json", json{{"mean_crps", rep.mean_crps},
                                        {"predictive_draws", rep.predictive_draws},
                                        {"diagnostics", diag},
                                        {"coverage", cov},
                                        {"kinship", kin},
                                        {"warnings", rep.warnings}});
    std::vector<std::vector<std::string>> rows;
    for (const auto &c : rep.coverage)
        rows.push_back({c.parameter, format_double(c.truth), format_double(c.mean), format_double(c.lower),
                        format_double(c.upper), c.covered ? "1" : "0"});
    write_csv(dir / "coverage.csv", {"parameter", "truth", "mean", "lower", "upper", "covered"}, rows);
    rows.clear();
    std::vector<std::vector<std::string>> tiles;
    for (Index a = 0; a < data.dyads(); ++a) {
        const auto [i, j] = data.index[a];
        const std::string si = ids[static_cast<std::size_t>(i)], sj = ids[static_cast<std::size_t>(j)];
        rows.push_back({si, sj, format_double(rep.crps[a])});
        tiles.push_back({si, sj, format_double(rep.kinship.mean_log1p[a]), format_double(rep.kinship.sd_log1p[a]),
                         format_double(rep.kinship.mean_residual[a])});
    }
    write_csv(dir / "crps.csv", {"id_i", "id_j", "crps"}, rows);
    write_csv(dir / "residual_tiles.csv", {"id_i", "id_j", "mean_log1p_residual", "sd", "kinship_residual"}, tiles);
}

std::string sha256_file(const fs::path &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    EVP_MD_CTX *ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
        EVP_MD_CTX_free(ctx);
        throw IoError("sha256 initialisation failed");
    }
    std::vector<char> buf(1 << 16);
    while (is) {
        is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (is.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(is.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int k = 0; k < len; ++k) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[k]);
    return os.str();
}

void write_manifest(const fs::path &dir, const Manifest &m) {
    json j{{"subcommand", m.subcommand},
           {"software_version", DYADFLOW_VERSION},
           {"chain_schema_version", kChainSchemaVersion},
           {"inputs", m.inputs},
           {"outputs", m.outputs},
           {"settings", m.settings}};
    j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
    write_json(dir / "manifest.json", j);
}

}  // namespace dyadflow
