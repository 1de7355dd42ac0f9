#include "shield/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "shield/errors.hpp"

namespace shield {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary artifacts assume a little-endian host");

void write_atomic(const std::string& path, std::string_view bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        require(!ec, ErrorCode::Io, "cannot create " + target.parent_path().string() + ": " + ec.message());
    }
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        require(static_cast<bool>(out), ErrorCode::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorCode::Io, "cannot rename onto " + path + ": " + ec.message());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void require_config(const std::string& expected, const std::string& found, const std::string& what) {
    require(expected == found, ErrorCode::ConfigMismatch,
            what + " was produced under config " + found.substr(0, 12) + ", current config is " +
                expected.substr(0, 12));
}

namespace {

std::string header_line(std::string_view magic, const json& header) {
    return std::string(magic) + " " + std::to_string(kFormatVersion) + " " + header.dump() + "\n";
}

// Splits "<magic> <version> <json>\n<payload>" and checks magic and version.
json parse_header(std::string_view bytes, std::string_view magic, std::string_view& payload) {
    const auto nl = bytes.find('\n');
    require(nl != std::string_view::npos, ErrorCode::Format, "missing artifact header");
    const std::string_view line = bytes.substr(0, nl);
    payload = bytes.substr(nl + 1);
    require(line.substr(0, magic.size()) == magic && line.size() > magic.size() && line[magic.size()] == ' ',
            ErrorCode::Format, "expected a " + std::string(magic) + " artifact");
    std::string_view rest = line.substr(magic.size() + 1);
    const auto sp = rest.find(' ');
    require(sp != std::string_view::npos, ErrorCode::Format, "truncated artifact header");
    require(rest.substr(0, sp) == std::to_string(kFormatVersion), ErrorCode::Format,
            "unsupported artifact version " + std::string(rest.substr(0, sp)));
    try {
        return json::parse(rest.substr(sp + 1));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Format, std::string("bad artifact header: ") + e.what());
    }
}

template <class T>
void append_raw(std::string& out, const T* data, std::size_t n) {
    out.append(reinterpret_cast<const char*>(data), n * sizeof(T));
}

template <class T>
void read_raw(std::string_view& in, T* data, std::size_t n) {
    require(in.size() >= n * sizeof(T), ErrorCode::Format, "artifact payload is truncated");
    std::memcpy(data, in.data(), n * sizeof(T));
    in.remove_prefix(n * sizeof(T));
}

json grid_json(const Grid3& g) {
    return {{"nx", g.nx},   {"ny", g.ny},   {"ntheta", g.ntheta}, {"xLo", g.xLo},
            {"xHi", g.xHi}, {"yLo", g.yLo}, {"yHi", g.yHi}};
}

Grid3 grid_from(const json& j) {
    Grid3 g;
    g.nx = j.at("nx");
    g.ny = j.at("ny");
    g.ntheta = j.at("ntheta");
    g.xLo = j.at("xLo");
    g.xHi = j.at("xHi");
    g.yLo = j.at("yLo");
    g.yHi = j.at("yHi");
    validate(g);
    return g;
}

json layers_json(const nn::Mlp& net) {
    json out = json::array();
    for (const auto& l : net.layers()) {
        out.push_back({{"in", l.in},
                       {"out", l.out},
                       {"layerNorm", l.layerNorm},
                       {"activation", l.activation == nn::Activation::SiLU ? "silu" : "identity"}});
    }
    return out;
}

std::vector<nn::LayerSpec> layers_from(const json& j) {
    std::vector<nn::LayerSpec> out;
    for (const auto& l : j) {
        const std::string act = l.at("activation");
        require(act == "silu" || act == "identity", ErrorCode::Format, "unknown activation " + act);
        out.push_back({l.at("in"), l.at("out"), l.at("layerNorm"),
                       act == "silu" ? nn::Activation::SiLU : nn::Activation::Identity});
    }
    return out;
}

void append_params(std::string& out, const nn::Mlp& net) {
    append_raw(out, net.parameters().data(), static_cast<std::size_t>(net.parameter_count()));
}

void read_params(std::string_view& in, nn::Mlp& net) {
    read_raw(in, net.parameters().data(), static_cast<std::size_t>(net.parameter_count()));
}

json vec3(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
Eigen::Vector3d vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json state_json(const DubinsState& s) { return {s.px, s.py, s.theta}; }
DubinsState state_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Format, std::string(what) + ": " + e.what());
    }
}

}  // namespace

std::string encode_value_grid(const ValueGrid& vg, const std::string& configHash) {
    json h = {{"grid", grid_json(vg.grid)},
              {"gamma", vg.meta.gamma},
              {"iterations", vg.meta.iterations},
              {"residual", vg.meta.residual},
              {"converged", vg.meta.converged},
              {"count", vg.values.size()},
              {"configHash", configHash}};
    std::string out = header_line(kValueGridMagic, h);
    std::vector<float> f(vg.values.begin(), vg.values.end());
    append_raw(out, f.data(), f.size());
    return out;
}

ValueGrid decode_value_grid(std::string_view bytes, std::string* configHash) {
    return guarded("value grid", [&] {
        std::string_view payload;
        const json h = parse_header(bytes, kValueGridMagic, payload);
        ValueGrid vg;
        vg.grid = grid_from(h.at("grid"));
        vg.meta.gamma = h.at("gamma");
        vg.meta.iterations = h.at("iterations");
        vg.meta.residual = h.at("residual");
        vg.meta.converged = h.at("converged");
        const std::size_t n = h.at("count");
        require(n == vg.grid.size(), ErrorCode::Format, "value count does not match the grid");
        std::vector<float> f(n);
        read_raw(payload, f.data(), n);
        require(payload.empty(), ErrorCode::Format, "trailing bytes after value grid");
        vg.values.assign(f.begin(), f.end());
        if (configHash) *configHash = h.at("configHash");
        return vg;
    });
}

std::string encode_ensemble(const Ensemble& ens, const MarginModel* margin, const std::string& configHash) {
    json members = json::array();
    for (int k = 0; k < ens.size(); ++k) members.push_back(ens.member(k).parameter_count());
    json h = {{"K", ens.size()},
              {"seed", ens.seed()},
              {"width", ens.width()},
              {"varFloor", ens.var_floor()},
              {"inDim", kFeatureDim},
              {"outDim", 2 * kStateDim},
              {"layers", ens.size() > 0 ? layers_json(ens.member(0)) : json::array()},
              {"memberParams", members},
              {"outputScale", vec3(ens.output_scale())},
              {"outputAnchor", vec3(ens.output_anchor())},
              {"finalLosses", ens.final_losses()},
              {"configHash", configHash}};
    if (margin) {
        h["margin"] = {{"layers", layers_json(margin->net)},
                       {"params", margin->net.parameter_count()},
                       {"degenerate", margin->degenerate},
                       {"trainAccuracy", margin->trainAccuracy}};
    }
    std::string out = header_line(kEnsembleMagic, h);
    for (int k = 0; k < ens.size(); ++k) append_params(out, ens.member(k));
    if (margin) append_params(out, margin->net);
    return out;
}

Ensemble decode_ensemble(std::string_view bytes, MarginModel* margin, bool* hasMargin, std::string* configHash) {
    return guarded("ensemble", [&] {
        std::string_view payload;
        const json h = parse_header(bytes, kEnsembleMagic, payload);
        const int K = h.at("K");
        require(K >= 1, ErrorCode::Format, "ensemble has no members");
        require(h.at("inDim").get<int>() == kFeatureDim && h.at("outDim").get<int>() == 2 * kStateDim,
                ErrorCode::Format, "ensemble dimensions do not match the Dubins features");
        Ensemble ens(K, h.at("seed").get<std::uint64_t>(), h.at("varFloor").get<double>(), h.at("width").get<int>());
        require(layers_json(ens.member(0)) == h.at("layers"), ErrorCode::Format, "ensemble architecture mismatch");
        for (int k = 0; k < K; ++k) {
            require(h.at("memberParams").at(static_cast<std::size_t>(k)).get<Eigen::Index>() ==
                        ens.member(k).parameter_count(),
                    ErrorCode::Format, "member parameter count mismatch");
            read_params(payload, ens.member(k));
        }
        ens.set_output_scale(vec3_from(h.at("outputScale")));
        ens.set_output_anchor(vec3_from(h.at("outputAnchor")));
        ens.final_losses() = h.at("finalLosses").get<std::vector<double>>();
        const bool has = h.contains("margin");
        if (hasMargin) *hasMargin = has;
        if (has) {
            MarginModel m;
            m.net = nn::Mlp(layers_from(h.at("margin").at("layers")));
            require(m.net.parameter_count() == h.at("margin").at("params").get<Eigen::Index>(), ErrorCode::Format,
                    "margin parameter count mismatch");
            read_params(payload, m.net);
            m.degenerate = h.at("margin").at("degenerate");
            m.trainAccuracy = h.at("margin").at("trainAccuracy");
            if (margin) *margin = std::move(m);
        }
        require(payload.empty(), ErrorCode::Format, "trailing bytes after ensemble");
        if (configHash) *configHash = h.at("configHash");
        return ens;
    });
}

std::string encode_qfunction(const QFunction& q, const std::vector<int>& hidden, const std::string& configHash) {
    json h = {{"inDim", q.input_dim()},
              {"hidden", hidden},
              {"layers", layers_json(q.net())},
              {"params", q.net().parameter_count()},
              {"configHash", configHash}};
    std::string out = header_line(kQFunctionMagic, h);
    append_params(out, q.net());
    return out;
}

QFunction decode_qfunction(std::string_view bytes, std::string* configHash) {
    return guarded("q-function", [&] {
        std::string_view payload;
        const json h = parse_header(bytes, kQFunctionMagic, payload);
        nn::Mlp net(layers_from(h.at("layers")));
        require(net.parameter_count() == h.at("params").get<Eigen::Index>(), ErrorCode::Format,
                "q-function parameter count mismatch");
        read_params(payload, net);
        require(payload.empty(), ErrorCode::Format, "trailing bytes after q-function");
        if (configHash) *configHash = h.at("configHash");
        return QFunction(std::move(net));
    });
}

std::string encode_dataset(const Dataset& d, const std::string& configHash) {
    std::string out;
    json meta = {{"kind", "dataset"},
                 {"version", kFormatVersion},
                 {"seed", d.seed},
                 {"provenance",
                  {{"nExpert", d.provenance.nExpert},
                   {"nRandom", d.provenance.nRandom},
                   {"horizon", d.provenance.horizon}}},
                 {"trajectories", d.trajectories.size()},
                 {"configHash", configHash}};
    out += meta.dump() + "\n";
    for (const auto& tr : d.trajectories) {
        json states = json::array(), actions = json::array();
        for (const auto& s : tr.states) states.push_back(state_json(s));
        for (const auto& a : tr.actions) actions.push_back(a.index());
        json line = {{"source", tr.source == TrajectorySource::Expert ? "expert" : "random"},
                     {"states", states},
                     {"actions", actions},
                     {"labels", tr.labels}};
        out += line.dump() + "\n";
    }
    return out;
}

Dataset decode_dataset(std::string_view text, const WorldConfig& world, std::string* configHash) {
    return guarded("dataset", [&] {
        std::istringstream in{std::string(text)};
        std::string line;
        require(static_cast<bool>(std::getline(in, line)), ErrorCode::Format, "empty dataset file");
        const json meta = json::parse(line);
        require(meta.at("kind") == "dataset" && meta.at("version") == kFormatVersion, ErrorCode::Format,
                "not a dataset file");
        Dataset d;
        d.seed = meta.at("seed");
        d.provenance.nExpert = meta.at("provenance").at("nExpert");
        d.provenance.nRandom = meta.at("provenance").at("nRandom");
        d.provenance.horizon = meta.at("provenance").at("horizon");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json j = json::parse(line);
            Trajectory tr;
            const std::string src = j.at("source");
            require(src == "expert" || src == "random", ErrorCode::Format, "unknown trajectory source " + src);
            tr.source = src == "expert" ? TrajectorySource::Expert : TrajectorySource::Random;
            for (const auto& s : j.at("states")) tr.states.push_back(state_from(s));
            for (const auto& a : j.at("actions")) {
                const int i = a;
                require(i >= 0 && i < kNumActions, ErrorCode::Format, "action index out of range");
                tr.actions.emplace_back(i);
            }
            tr.labels = j.at("labels").get<std::vector<int>>();
            verify(tr, world);
            d.trajectories.push_back(std::move(tr));
        }
        require(d.trajectories.size() == meta.at("trajectories").get<std::size_t>(), ErrorCode::Format,
                "dataset is truncated");
        if (configHash) *configHash = meta.at("configHash");
        return d;
    });
}

json to_json(const CalibrationResult& r, const std::string& configHash) {
    return {{"kind", "calibration"},
            {"version", kFormatVersion},
            {"epsilonHat", std::isinf(r.epsilonHat) ? json(nullptr) : json(r.epsilonHat)},
            {"degenerate", r.degenerate},
            {"alphaCal", r.config.alphaCal},
            {"alphaTrans", r.config.alphaTrans},
            {"N", r.N},
            {"scores", r.trajScores},
            {"configHash", configHash}};
}

CalibrationResult calibration_from_json(const json& j, std::string* configHash) {
    return guarded("calibration", [&] {
        require(j.at("kind") == "calibration" && j.at("version") == kFormatVersion, ErrorCode::Format,
                "not a calibration file");
        CalibrationResult r;
        r.epsilonHat = j.at("epsilonHat").is_null() ? std::numeric_limits<double>::infinity()
                                                     : j.at("epsilonHat").get<double>();
        r.degenerate = j.at("degenerate");
        r.config.alphaCal = j.at("alphaCal");
        r.config.alphaTrans = j.at("alphaTrans");
        r.N = j.at("N");
        r.trajScores = j.at("scores").get<std::vector<double>>();
        require(static_cast<int>(r.trajScores.size()) == r.N, ErrorCode::Format, "score count differs from N");
        if (configHash) *configHash = j.at("configHash");
        return r;
    });
}

json to_json(const ConfusionStats& s) {
    return {{"tp", s.tp},   {"fp", s.fp},   {"tn", s.tn},
            {"fn", s.fn},   {"tpr", s.tpr}, {"tnr", s.tnr},
            {"fpr", s.fpr}, {"precision", s.precision}, {"f1", s.f1},
            {"bacc", s.bacc}, {"excluded", s.excluded}};
}

json to_json(const SafetySummary& s) {
    return {{"total", s.total},     {"safe", s.safe},           {"failures", s.failures},
            {"halted", s.halted},   {"safetyRate", s.safetyRate}, {"failureRate", s.failureRate}};
}

std::string encode_rollout_log(const RolloutResult& r) {
    std::string out;
    for (const auto& rec : r.records) {
        const auto& d = rec.decision;
        json j = {{"t", rec.t},
                  {"state", state_json(rec.state)},
                  {"aTask", d.aTask.index()},
                  {"executed", d.executed ? json(d.executed->index()) : json("HALT")},
                  {"intervened", d.intervened},
                  {"halted", d.halted},
                  {"valueNext", d.valueNext},
                  {"uTask", d.uTask},
                  {"uFallback", d.uFallback ? json(*d.uFallback) : json(nullptr)}};
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<ActionId> decode_task_actions(std::string_view text) {
    return guarded("rollout log", [&] {
        std::istringstream in{std::string(text)};
        std::string line;
        std::vector<ActionId> out;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const int a = json::parse(line).at("aTask");
            require(a >= 0 && a < kNumActions, ErrorCode::Format, "action index out of range");
            out.emplace_back(a);
        }
        return out;
    });
}

DubinsState decode_log_start(std::string_view text) {
    return guarded("rollout log", [&] {
        const auto nl = text.find('\n');
        require(!text.empty(), ErrorCode::Format, "empty rollout log");
        return state_from(json::parse(text.substr(0, nl)).at("state"));
    });
}

}  // namespace shield
