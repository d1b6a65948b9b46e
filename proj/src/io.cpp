#include "oid/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace oid {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::filesystem::path& file, const std::string& where,
                       const std::string& what) {
    throw ConfigError(file.string() + ": " + where + ": " + what);
}

json parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // e.byte anchors the message to a line for the CLI contract.
        std::size_t line = 1;
        for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
            if (text[i] == '\n') ++line;
        throw ConfigError(path.string() + ": line " + std::to_string(line) + ": " + e.what());
    }
}

double require_number(const json& j, const std::filesystem::path& f, const std::string& key) {
    if (!j.contains(key) || !j[key].is_number()) fail(f, key, "required number missing");
    return j[key].get<double>();
}

Matrix parse_matrix(const json& j, const std::filesystem::path& f, const std::string& where) {
    if (j.is_number()) {
        Matrix m(1, 1);
        m(0, 0) = j.get<double>();
        return m;
    }
    if (!j.is_array() || j.empty()) fail(f, where, "expected a number or a 2-D array");
    const auto rows = j.size();
    const auto cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0) fail(f, where, "expected a 2-D array");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) fail(f, where, "ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) fail(f, where, "matrix entries must be numbers");
            m(r, c) = j[r][c].get<double>();
        }
    }
    return m;
}

// Entries are numbers or {"theta": index}.
AffineMatrix parse_affine(const json& j, const std::filesystem::path& f, const std::string& where) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) fail(f, where, "expected a 2-D array");
    const auto rows = j.size();
    const auto cols = j[0].size();
    AffineMatrix am;
    am.base = Matrix::Zero(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) fail(f, where, "ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c) {
            const auto& e = j[r][c];
            if (e.is_number()) {
                am.base(r, c) = e.get<double>();
            } else if (e.is_object() && e.contains("theta") && e["theta"].is_number_integer()) {
                am.refs.push_back({static_cast<int>(r), static_cast<int>(c), e["theta"].get<int>()});
            } else {
                fail(f, where, "entries must be numbers or {\"theta\": index}");
            }
        }
    }
    return am;
}

Vector parse_vector(const json& j, const std::filesystem::path& f, const std::string& where) {
    if (!j.is_array()) fail(f, where, "expected an array of numbers");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) fail(f, where, "expected an array of numbers");
        v(i) = j[i].get<double>();
    }
    return v;
}

ParametricLtiModel model_from_json(const json& j, const std::filesystem::path& f) {
    ParametricLtiModel m;
    if (!j.contains("structure") || !j["structure"].is_string())
        fail(f, "structure", "required string missing");
    const std::string tag = j["structure"].get<std::string>();
    if (!j.contains("theta_g")) fail(f, "theta_g", "required array missing");
    m.theta_g = parse_vector(j["theta_g"], f, "theta_g");
    if (j.contains("theta_h")) m.theta_h = parse_vector(j["theta_h"], f, "theta_h");
    if (!j.contains("lambda")) fail(f, "lambda", "required noise covariance missing");
    m.lambda = parse_matrix(j["lambda"], f, "lambda");

    if (tag == "fir") {
        m.structure = FirStructure{static_cast<int>(m.theta_g.size())};
        m.n_u = m.n_y = 1;
    } else if (tag == "state_space") {
        if (!j.contains("a") || !j.contains("b") || !j.contains("c"))
            fail(f, "state_space", "a, b and c matrices required");
        StateSpaceStructure s;
        s.a = parse_affine(j["a"], f, "a");
        s.b = parse_affine(j["b"], f, "b");
        s.c = parse_affine(j["c"], f, "c");
        m.n_u = static_cast<int>(s.b.base.cols());
        m.n_y = static_cast<int>(s.c.base.rows());
        m.structure = std::move(s);
    } else if (tag == "rational_tf") {
        RationalTfStructure s;
        s.num_order = static_cast<int>(require_number(j, f, "num_order"));
        s.den_order = static_cast<int>(require_number(j, f, "den_order"));
        m.structure = s;
        m.n_u = m.n_y = 1;
    } else {
        fail(f, "structure", "unknown structure '" + tag + "'");
    }
    try {
        m.validate();
    } catch (const std::invalid_argument& e) {
        fail(f, "model", e.what());
    }
    return m;
}

VappScenario vapp_from_json(const json& j, const std::filesystem::path& f,
                            const ExperimentSpec& spec) {
    if (!j.contains("scenario") || !j["scenario"].is_string())
        fail(f, "vapp.scenario", "required string missing ('open_loop_step' or 'mpc')");
    const std::string tag = j["scenario"].get<std::string>();
    if (tag == "open_loop_step") {
        OpenLoopStepScenario s;
        if (j.contains("amplitude")) s.amplitude = j["amplitude"].get<double>();
        if (j.contains("length")) s.length = j["length"].get<int>();
        if (s.length < 1) fail(f, "vapp.length", "must be positive");
        return s;
    }
    if (tag == "mpc") {
        MpcScenario s;
        s.u_max = spec.u_max;
        s.y_max = spec.y_max;
        if (j.contains("q_weight")) s.q_weight = j["q_weight"].get<double>();
        if (j.contains("r_weight")) s.r_weight = j["r_weight"].get<double>();
        if (j.contains("reference_amplitude"))
            s.reference_amplitude = j["reference_amplitude"].get<double>();
        if (j.contains("horizon")) s.horizon = j["horizon"].get<int>();
        if (j.contains("length")) s.length = j["length"].get<int>();
        if (s.horizon < 1 || s.length < 1) fail(f, "vapp", "horizon and length must be positive");
        return s;
    }
    fail(f, "vapp.scenario", "unknown scenario '" + tag + "'");
}

}  // namespace

ParametricLtiModel load_model(const std::filesystem::path& path) {
    return model_from_json(parse_file(path), path);
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const json j = parse_file(path);
    RunConfig cfg;

    if (j.contains("schema_version") && j["schema_version"].get<int>() != 1)
        fail(path, "schema_version", "this build reads schema version 1");
    if (!j.contains("model")) fail(path, "model", "required (inline object or file path)");
    if (j["model"].is_string()) {
        const auto model_path = path.parent_path() / j["model"].get<std::string>();
        if (!std::filesystem::exists(model_path))
            fail(path, "model", "referenced file does not exist: " + model_path.string());
        cfg.model = load_model(model_path);
    } else if (j["model"].is_object()) {
        cfg.model = model_from_json(j["model"], path);
    } else {
        fail(path, "model", "must be an object or a file path");
    }

    if (!j.contains("experiment") || !j["experiment"].is_object())
        fail(path, "experiment", "required object missing");
    const json& e = j["experiment"];
    cfg.spec.gamma = require_number(e, path, "gamma");
    cfg.spec.alpha = require_number(e, path, "alpha");
    cfg.spec.u_max = require_number(e, path, "u_max");
    cfg.spec.y_max = require_number(e, path, "y_max");
    cfg.spec.horizon_nu = static_cast<int>(require_number(e, path, "horizon_nu"));
    cfg.spec.truncation_n = static_cast<int>(require_number(e, path, "truncation_n"));
    if (e.contains("tol_j")) cfg.spec.tol_j = e["tol_j"].get<double>();
    if (e.contains("tol_inner")) cfg.spec.tol_inner = e["tol_inner"].get<double>();
    if (e.contains("max_inner")) cfg.spec.max_inner = e["max_inner"].get<int>();
    if (e.contains("max_time")) cfg.spec.max_time = e["max_time"].get<long>();
    if (e.contains("tail_energy_tol")) cfg.spec.tail_energy_tol = e["tail_energy_tol"].get<double>();
    try {
        cfg.spec.validate();
    } catch (const std::invalid_argument& ex) {
        fail(path, "experiment", ex.what());
    }

    if (!j.contains("vapp") || !j["vapp"].is_object())
        fail(path, "vapp", "required object missing (exactly one scenario)");
    cfg.vapp = vapp_from_json(j["vapp"], path, cfg.spec);

    if (j.contains("monte_carlo")) {
        const json& mc = j["monte_carlo"];
        if (!mc.is_object()) fail(path, "monte_carlo", "must be an object");
        if (mc.contains("runs")) cfg.monte_carlo.runs = mc["runs"].get<int>();
        if (mc.contains("seed")) cfg.monte_carlo.seed = mc["seed"].get<std::uint64_t>();
        if (mc.contains("lambda_scale")) cfg.monte_carlo.lambda_scale = mc["lambda_scale"].get<double>();
        if (cfg.monte_carlo.runs < 0 || cfg.monte_carlo.lambda_scale < 0.0)
            fail(path, "monte_carlo", "runs and lambda_scale must be nonnegative");
    }
    if (j.contains("output_dir")) cfg.output_dir = j["output_dir"].get<std::string>();
    return cfg;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError(path.string() + ": cannot open for writing");
    for (std::size_t i = 0; i < header.size(); ++i)
        out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw std::invalid_argument("write_csv: row width does not match header");
        for (std::size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << format_double(row[i]);
        out << "\n";
    }
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open file");
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) table.header.push_back(cell);
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            char* end = nullptr;
            const double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str())
                throw ConfigError(path.string() + ": line " + std::to_string(line_no) +
                                  ": not a number: '" + cell + "'");
            row.push_back(v);
        }
        if (row.size() != table.header.size())
            throw ConfigError(path.string() + ": line " + std::to_string(line_no) +
                              ": expected " + std::to_string(table.header.size()) + " columns");
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m) {
    std::ofstream out(path);
    if (!out) throw ConfigError(path.string() + ": cannot open for writing");
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            out << (c ? "," : "") << format_double(m(r, c));
        out << "\n";
    }
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open file");
    std::vector<std::vector<double>> rows;
    std::string line, cell;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ConfigError(path.string() + ": empty matrix");
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != rows[0].size()) throw ConfigError(path.string() + ": ragged rows");
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    }
    return m;
}

}  // namespace oid
