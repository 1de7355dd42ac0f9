#include "shield/config.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <set>
#include <sstream>

#include "shield/errors.hpp"

namespace shield {

using nlohmann::json;

namespace {

// Reads the keys of one object, keeping defaults for absent keys and
// rejecting keys nobody asked for.
class Fields {
public:
    Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        require(j.is_object(), ErrorCode::Format, where_ + " must be an object");
    }
    ~Fields() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (const auto& [k, v] : j_.items()) {
            require(seen_.count(k) > 0, ErrorCode::Format, "unknown key " + where_ + "." + k);
        }
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw Error(ErrorCode::Format, where_ + "." + key + ": " + e.what());
        }
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

std::string margin_source_name(MarginSource s) { return s == MarginSource::Analytic ? "analytic" : "learned"; }

MarginSource parse_margin_source(const std::string& s) {
    if (s == "analytic") return MarginSource::Analytic;
    if (s == "learned") return MarginSource::Learned;
    throw Error(ErrorCode::Format, "unknown margin source '" + s + "'");
}

}  // namespace

json to_json(const FailureSpec& f) {
    if (const auto* c = std::get_if<Circle>(&f.shape)) {
        return {{"type", "circle"}, {"cx", c->cx}, {"cy", c->cy}, {"radius", c->radius}};
    }
    if (const auto* b = std::get_if<Band>(&f.shape)) return {{"type", "band"}, {"halfWidth", b->halfWidth}};
    json members = json::array();
    for (const auto& m : std::get<FailureUnion>(f.shape).members) members.push_back(to_json(m));
    return {{"type", "union"}, {"members", members}};
}

FailureSpec failure_from_json(const json& j) {
    Fields r(j, "failure");
    std::string type;
    r.get("type", type);
    if (type == "circle") {
        Circle c;
        r.get("cx", c.cx);
        r.get("cy", c.cy);
        r.get("radius", c.radius);
        return FailureSpec{c};
    }
    if (type == "band") {
        Band b;
        r.get("halfWidth", b.halfWidth);
        return FailureSpec{b};
    }
    if (type == "union") {
        std::vector<FailureSpec> members;
        if (const json* m = r.sub("members")) {
            for (const auto& x : *m) members.push_back(failure_from_json(x));
        }
        return FailureSpec::any_of(std::move(members));
    }
    throw Error(ErrorCode::Format, "unknown failure type '" + type + "'");
}

json to_json(const ExperimentConfig& c) {
    json j;
    j["world"] = {{"v", c.world.v}, {"dt", c.world.dt}, {"bbox", c.world.bbox}, {"failure", to_json(c.world.failure)}};
    j["grid"] = {{"nx", c.grid.nx},     {"ny", c.grid.ny},     {"ntheta", c.grid.ntheta},
                 {"xLo", c.grid.xLo},   {"xHi", c.grid.xHi},   {"yLo", c.grid.yLo},
                 {"yHi", c.grid.yHi}};
    j["datagen"] = {{"nExpert", c.datagen.nExpert},   {"nRandom", c.datagen.nRandom},
                    {"horizon", c.datagen.horizon},   {"boundary", c.datagen.boundary},
                    {"nCalib", c.datagen.nCalib},     {"seed", c.datagen.seed},
                    {"splitSeed", c.datagen.splitSeed}};
    const auto& e = c.ensemble;
    j["ensemble"] = {{"K", e.K},
                     {"width", e.width},
                     {"epochs", e.epochs},
                     {"batchSize", e.batchSize},
                     {"learningRate", e.learningRate},
                     {"varFloor", e.varFloor},
                     {"seed", e.seed},
                     {"absolutePosition", e.absolutePosition},
                     {"warmupEpochs", e.warmupEpochs},
                     {"finalLearningRateFraction", e.finalLearningRateFraction},
                     {"method", to_string(c.method)}};
    const auto& m = c.margin.classifier;
    j["margin"] = {{"source", margin_source_name(c.margin.source)},
                   {"hidden", m.hidden},
                   {"epochs", m.epochs},
                   {"batchSize", m.batchSize},
                   {"learningRate", m.learningRate},
                   {"seed", m.seed}};
    j["calibration"] = {{"alphaCal", c.calibration.alphaCal}, {"alphaTrans", c.calibration.alphaTrans}};
    j["solver"] = {{"gamma", c.solver.gamma}, {"tol", c.solver.tol}, {"maxSweeps", c.solver.maxSweeps}};
    j["penalty"] = {{"kappa", c.penalty.kappa},
                    {"bboxExempt", c.penalty.bboxExempt},
                    {"epsilonOffset", c.penalty.epsilonOffset}};
    const auto& q = c.qtrain;
    j["qtrain"] = {{"gamma", q.gamma},
                   {"iterations", q.iterations},
                   {"bufferSize", q.bufferSize},
                   {"batchSize", q.batchSize},
                   {"maxImagineSteps", q.maxImagineSteps},
                   {"targetSyncPeriod", q.targetSyncPeriod},
                   {"lanes", q.lanes},
                   {"hidden", q.hidden},
                   {"learningRate", q.learningRate},
                   {"exploreStart", q.exploreStart},
                   {"exploreEnd", q.exploreEnd},
                   {"initialValue", q.initialValue},
                   {"seed", q.seed}};
    j["filter"] = {{"delta", c.delta}};
    j["eval"] = {{"challengingStarts", c.eval.challengingStarts},
                 {"horizon", c.eval.horizon},
                 {"startSeed", c.eval.startSeed},
                 {"rolloutSeed", c.eval.rolloutSeed}};
    j["serve"] = {{"port", c.serve.port}, {"seed", c.serve.seed}, {"startMargin", c.serve.startMargin}};
    return j;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Fields top(j, "config");
    if (const json* w = top.sub("world")) {
        Fields r(*w, "world");
        r.get("v", c.world.v);
        r.get("dt", c.world.dt);
        r.get("bbox", c.world.bbox);
        if (const json* f = r.sub("failure")) c.world.failure = failure_from_json(*f);
    }
    if (const json* g = top.sub("grid")) {
        Fields r(*g, "grid");
        r.get("nx", c.grid.nx);
        r.get("ny", c.grid.ny);
        r.get("ntheta", c.grid.ntheta);
        r.get("xLo", c.grid.xLo);
        r.get("xHi", c.grid.xHi);
        r.get("yLo", c.grid.yLo);
        r.get("yHi", c.grid.yHi);
    }
    if (const json* d = top.sub("datagen")) {
        Fields r(*d, "datagen");
        r.get("nExpert", c.datagen.nExpert);
        r.get("nRandom", c.datagen.nRandom);
        r.get("horizon", c.datagen.horizon);
        r.get("boundary", c.datagen.boundary);
        r.get("nCalib", c.datagen.nCalib);
        r.get("seed", c.datagen.seed);
        r.get("splitSeed", c.datagen.splitSeed);
    }
    if (const json* x = top.sub("ensemble")) {
        Fields r(*x, "ensemble");
        auto& e = c.ensemble;
        r.get("K", e.K);
        r.get("width", e.width);
        r.get("epochs", e.epochs);
        r.get("batchSize", e.batchSize);
        r.get("learningRate", e.learningRate);
        r.get("varFloor", e.varFloor);
        r.get("seed", e.seed);
        r.get("absolutePosition", e.absolutePosition);
        r.get("warmupEpochs", e.warmupEpochs);
        r.get("finalLearningRateFraction", e.finalLearningRateFraction);
        std::string method = to_string(c.method);
        r.get("method", method);
        c.method = parse_uncertainty_method(method);
    }
    if (const json* x = top.sub("margin")) {
        Fields r(*x, "margin");
        std::string source = margin_source_name(c.margin.source);
        r.get("source", source);
        c.margin.source = parse_margin_source(source);
        auto& m = c.margin.classifier;
        r.get("hidden", m.hidden);
        r.get("epochs", m.epochs);
        r.get("batchSize", m.batchSize);
        r.get("learningRate", m.learningRate);
        r.get("seed", m.seed);
    }
    if (const json* x = top.sub("calibration")) {
        Fields r(*x, "calibration");
        r.get("alphaCal", c.calibration.alphaCal);
        r.get("alphaTrans", c.calibration.alphaTrans);
    }
    if (const json* x = top.sub("solver")) {
        Fields r(*x, "solver");
        r.get("gamma", c.solver.gamma);
        r.get("tol", c.solver.tol);
        r.get("maxSweeps", c.solver.maxSweeps);
    }
    if (const json* x = top.sub("penalty")) {
        Fields r(*x, "penalty");
        r.get("kappa", c.penalty.kappa);
        r.get("bboxExempt", c.penalty.bboxExempt);
        r.get("epsilonOffset", c.penalty.epsilonOffset);
    }
    if (const json* x = top.sub("qtrain")) {
        Fields r(*x, "qtrain");
        auto& q = c.qtrain;
        r.get("gamma", q.gamma);
        r.get("iterations", q.iterations);
        r.get("bufferSize", q.bufferSize);
        r.get("batchSize", q.batchSize);
        r.get("maxImagineSteps", q.maxImagineSteps);
        r.get("targetSyncPeriod", q.targetSyncPeriod);
        r.get("lanes", q.lanes);
        r.get("hidden", q.hidden);
        r.get("learningRate", q.learningRate);
        r.get("exploreStart", q.exploreStart);
        r.get("exploreEnd", q.exploreEnd);
        r.get("initialValue", q.initialValue);
        r.get("seed", q.seed);
    }
    if (const json* x = top.sub("filter")) {
        Fields r(*x, "filter");
        r.get("delta", c.delta);
    }
    if (const json* x = top.sub("eval")) {
        Fields r(*x, "eval");
        r.get("challengingStarts", c.eval.challengingStarts);
        r.get("horizon", c.eval.horizon);
        r.get("startSeed", c.eval.startSeed);
        r.get("rolloutSeed", c.eval.rolloutSeed);
    }
    if (const json* x = top.sub("serve")) {
        Fields r(*x, "serve");
        r.get("port", c.serve.port);
        r.get("seed", c.serve.seed);
        r.get("startMargin", c.serve.startMargin);
    }
    return c;
}

void validate(const ExperimentConfig& c) {
    validate(c.world);
    validate(c.grid);
    validate(c.ensemble);
    validate(c.calibration);
    validate(c.solver);
    const auto& d = c.datagen;
    require(d.nExpert >= 0 && d.nRandom >= 0 && d.horizon >= 1 && d.boundary > 0.0 && d.nCalib >= 0,
            ErrorCode::InvalidArgument, "invalid datagen parameters");
    require(c.penalty.kappa >= 0.0, ErrorCode::InvalidArgument, "kappa must be >= 0");
    require(c.eval.challengingStarts >= 0 && c.eval.horizon >= 0, ErrorCode::InvalidArgument,
            "invalid eval parameters");
    require(c.serve.port > 0 && c.serve.port < 65536, ErrorCode::InvalidArgument, "invalid port");
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Format, path + ": " + e.what());
    }
    ExperimentConfig c = config_from_json(j);
    validate(c);
    return c;
}

std::string canonical_dump(const ExperimentConfig& cfg) { return to_json(cfg).dump(); }

std::string config_hash(const ExperimentConfig& cfg) {
    const std::string s = canonical_dump(cfg);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    require(EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr) == 1, ErrorCode::Io,
            "SHA-256 failed");
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 15]);
    }
    return out;
}

ExperimentConfig circle_preset() { return ExperimentConfig{}; }

ExperimentConfig band_preset() {
    ExperimentConfig c;
    c.world.failure = FailureSpec::band(0.6);
    c.datagen.nRandom = 0;
    c.margin.source = MarginSource::Learned;
    c.penalty.bboxExempt = false;
    c.solver.maxSweeps = 5000;
    return c;
}

}  // namespace shield
