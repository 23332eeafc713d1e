#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "feberi/analytic.hpp"
#include "feberi/errors.hpp"
#include "feberi/numeric.hpp"
#include "feberi/units_params.hpp"

namespace feberi::cli {

using nlohmann::json;

struct BeamConfig {
    double beta = 0.7;
};

struct TLSConfig {
    double omega21 = 3e15;
    double r_perp0 = 2e-9;
    double theta = pi / 2.0;
    double phi = 0.0;
    std::optional<Dipole> dipole;
};

struct CouplingConfig {
    CouplingMode mode = CouplingMode::direct;
    double g_abs = 1.1e-3;
    double phi_g = 0.0;
};

struct QEWConfig {
    double sigma_t0 = 0.0;
    double L_D = 0.0;
};

struct PinemConfig {
    double two_gL = 0.0;
    double phi0 = 0.0;
    double omega_b = 0.0;
};

struct NumericConfig {
    bool enabled = false;
    int N = 4096;
    double P_cutoff_factor = 1.0;
    double dt_factor = 1.0;  // dt = dt_factor · T21/200
    Integrator method = Integrator::rk4;
    KernelMode kernel = KernelMode::closed_form;
    int record_every = 1;
};

enum class ZetaMode { derived, explicit_value };

struct InteractionSettings {
    ZetaMode zeta_mode = ZetaMode::derived;
    std::optional<double> zeta;
    RecoilSign recoil_sign = RecoilSign::as_printed;
    int harmonic_n = 1;
    std::optional<double> gamma_b;
    TransitionForm transition_form = TransitionForm::single_harmonic;
};

struct GateConfig {
    double norm_tol = 1e-6;
    double energy_rel_tol_closed = 1e-12;
    double energy_rel_tol_numeric = 1e-3;
    double numeric_linf_rel_tol = 0.05;
};

enum class ScanAxis { theta, phi, L_D, omega_b_ratio };

struct ScanConfig {
    ScanAxis axis = ScanAxis::theta;
    double start = 0.0;
    double stop = pi;
    int steps = 21;
};

struct BunchingConfig {
    double L_start = 0.0;
    std::optional<double> L_stop;  // defaults to the Talbot length
    int steps = 401;
    int harmonics = 3;
    std::vector<double> marks;
    int profile_points = 2001;
    std::optional<double> profile_half_width;
    DensityModel model = DensityModel::talbot_series;
};

struct WignerConfig {
    int N = 1024;
    int M = 0;
};

struct MetaConfig {
    std::string label;
    std::vector<std::string> inferred;
};

struct ScenarioConfig {
    BeamConfig beam;
    TLSConfig tls;
    CouplingConfig coupling;
    QEWConfig qew;
    std::optional<PinemConfig> pinem;
    NumericConfig numeric;
    InteractionSettings interaction;
    GateConfig gates;
    ScanConfig scan;
    BunchingConfig bunching;
    WignerConfig wigner;
    MetaConfig meta;
};

inline std::string to_string(ScanAxis a) {
    switch (a) {
        case ScanAxis::theta: return "theta_rad";
        case ScanAxis::phi: return "phi_rad";
        case ScanAxis::L_D: return "L_D_m";
        default: return "omega_b_ratio";
    }
}

namespace detail {

// Reads one group of a JSON object, rejecting unknown keys and mistyped values with their full path.
class Group {
public:
    Group(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }
    void done() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }
    bool has(const std::string& k) {
        seen_.insert(k);
        return j_.contains(k) && !j_.at(k).is_null();
    }
    std::string at(const std::string& k) const { return path_ + "." + k; }
    void number(const std::string& k, double& v) {
        if (!has(k)) return;
        if (!j_.at(k).is_number()) throw ConfigError(at(k) + ": expected a number");
        v = j_.at(k).get<double>();
        if (!std::isfinite(v)) throw ConfigError(at(k) + ": must be finite");
    }
    void number(const std::string& k, std::optional<double>& v) {
        if (!has(k)) return;
        double x = 0.0;
        number(k, x);
        v = x;
    }
    void integer(const std::string& k, int& v) {
        if (!has(k)) return;
        if (!j_.at(k).is_number_integer()) throw ConfigError(at(k) + ": expected an integer");
        v = j_.at(k).get<int>();
    }
    void boolean(const std::string& k, bool& v) {
        if (!has(k)) return;
        if (!j_.at(k).is_boolean()) throw ConfigError(at(k) + ": expected true or false");
        v = j_.at(k).get<bool>();
    }
    void text(const std::string& k, std::string& v) {
        if (!has(k)) return;
        if (!j_.at(k).is_string()) throw ConfigError(at(k) + ": expected a string");
        v = j_.at(k).get<std::string>();
    }
    template <class E>
    void choice(const std::string& k, E& v, const std::vector<std::pair<std::string, E>>& options) {
        if (!has(k)) return;
        std::string s;
        text(k, s);
        std::string allowed;
        for (const auto& [name, value] : options) {
            if (name == s) {
                v = value;
                return;
            }
            allowed += (allowed.empty() ? "" : ", ") + name;
        }
        throw ConfigError(at(k) + ": expected one of " + allowed);
    }
    const json& raw(const std::string& k) {
        seen_.insert(k);
        return j_.at(k);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline cplx read_complex(const json& j, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw ConfigError(path + ": expected [re, im]");
    return {j[0].get<double>(), j[1].get<double>()};
}

inline const std::vector<std::pair<std::string, RecoilSign>> recoil_names{{"as_printed", RecoilSign::as_printed},
                                                                         {"flipped", RecoilSign::flipped}};
inline const std::vector<std::pair<std::string, ZetaMode>> zeta_names{{"derived", ZetaMode::derived},
                                                                     {"explicit", ZetaMode::explicit_value}};
inline const std::vector<std::pair<std::string, TransitionForm>> form_names{
    {"single_harmonic", TransitionForm::single_harmonic}, {"full_sum", TransitionForm::full_sum}};
inline const std::vector<std::pair<std::string, Integrator>> method_names{{"rk4", Integrator::rk4},
                                                                         {"euler", Integrator::euler}};
inline const std::vector<std::pair<std::string, KernelMode>> kernel_names{{"closed_form", KernelMode::closed_form},
                                                                         {"quadrature", KernelMode::quadrature}};
inline const std::vector<std::pair<std::string, CouplingMode>> coupling_names{{"direct", CouplingMode::direct},
                                                                             {"computed", CouplingMode::computed}};
inline const std::vector<std::pair<std::string, ScanAxis>> axis_names{{"theta_rad", ScanAxis::theta},
                                                                     {"phi_rad", ScanAxis::phi},
                                                                     {"L_D_m", ScanAxis::L_D},
                                                                     {"omega_b_ratio", ScanAxis::omega_b_ratio}};
inline const std::vector<std::pair<std::string, DensityModel>> density_names{
    {"talbot_series", DensityModel::talbot_series}, {"exact_sidebands", DensityModel::exact_sidebands}};

template <class E>
std::string name_of(E v, const std::vector<std::pair<std::string, E>>& options) {
    for (const auto& [n, e] : options)
        if (e == v) return n;
    return {};
}

inline json complex_json(cplx z) { return json::array({z.real(), z.imag()}); }

}  // namespace detail

// Validates ranges that do not depend on other modules; module constructors check the rest.
inline void validate(const ScenarioConfig& c) {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };
    require(c.beam.beta > 0.0 && c.beam.beta < 1.0, "beam.beta: must lie in (0, 1)");
    require(c.tls.omega21 > 0.0, "tls.omega21_rad_per_s: must be positive");
    require(c.tls.r_perp0 > 0.0, "tls.r_perp0_m: must be positive");
    require(c.tls.theta >= 0.0 && c.tls.theta <= pi, "tls.theta_rad: must lie in [0, pi]");
    require(c.coupling.g_abs >= 0.0, "coupling.g_abs: must be non-negative");
    require(c.coupling.mode == CouplingMode::direct || c.tls.dipole.has_value(),
            "tls.dipole_C_m: required when coupling.mode is computed");
    require(c.qew.sigma_t0 > 0.0, "qew.sigma_t0_s: must be positive");
    require(c.qew.L_D >= 0.0, "qew.L_D_m: must be non-negative");
    if (c.pinem) {
        require(c.pinem->two_gL >= 0.0, "pinem.two_gL: must be non-negative");
        require(c.pinem->omega_b > 0.0, "pinem.omega_b_rad_per_s: must be positive");
    }
    require(c.numeric.N >= 512 && c.numeric.N % 2 == 0, "numeric.N: must be even and at least 512");
    require(c.numeric.P_cutoff_factor > 0.0, "numeric.P_cutoff_factor: must be positive");
    require(c.numeric.dt_factor > 0.0, "numeric.dt_factor: must be positive");
    require(c.numeric.record_every >= 1, "numeric.record_every: must be at least 1");
    require(c.interaction.zeta_mode == ZetaMode::derived || c.interaction.zeta.has_value(),
            "interaction.zeta_rad: required when interaction.zeta_mode is explicit");
    require(c.interaction.harmonic_n >= 1, "interaction.harmonic_n: must be at least 1");
    require(c.gates.norm_tol > 0.0 && c.gates.energy_rel_tol_closed > 0.0 && c.gates.energy_rel_tol_numeric > 0.0 &&
                c.gates.numeric_linf_rel_tol > 0.0,
            "gates: tolerances must be positive");
    require(c.scan.steps >= 1, "scan.steps: must be at least 1");
    require(c.bunching.steps >= 2, "bunching.steps: must be at least 2");
    require(c.bunching.harmonics >= 1, "bunching.harmonics: must be at least 1");
    require(c.bunching.profile_points >= 2, "bunching.profile_points: must be at least 2");
    require(c.bunching.L_start >= 0.0, "bunching.L_D_start_m: must be non-negative");
    require(c.wigner.N >= 64 && c.wigner.N % 2 == 0, "wigner.N: must be even and at least 64");
    require(c.wigner.M >= 0, "wigner.M: must be non-negative");
}

// Accepts either a scenario document or a run manifest (whose "config" member is a scenario).
inline ScenarioConfig parse_config(const json& doc) {
    const json& j = doc.is_object() && doc.contains("schema_version") && doc.contains("config") ? doc.at("config") : doc;
    ScenarioConfig c;
    detail::Group root(j, "config");
    if (root.has("beam")) {
        detail::Group g(root.raw("beam"), "beam");
        g.number("beta", c.beam.beta);
        g.done();
    }
    if (!root.has("tls")) throw ConfigError("tls: required group is missing");
    {
        detail::Group g(root.raw("tls"), "tls");
        g.number("omega21_rad_per_s", c.tls.omega21);
        g.number("r_perp0_m", c.tls.r_perp0);
        g.number("theta_rad", c.tls.theta);
        g.number("phi_rad", c.tls.phi);
        if (g.has("dipole_C_m")) {
            detail::Group d(g.raw("dipole_C_m"), "tls.dipole_C_m");
            Dipole mu;
            if (d.has("z")) mu.z = detail::read_complex(d.raw("z"), d.at("z"));
            if (d.has("perp")) mu.perp = detail::read_complex(d.raw("perp"), d.at("perp"));
            d.done();
            c.tls.dipole = mu;
        }
        g.done();
    }
    if (root.has("coupling")) {
        detail::Group g(root.raw("coupling"), "coupling");
        g.choice("mode", c.coupling.mode, detail::coupling_names);
        g.number("g_abs", c.coupling.g_abs);
        g.number("phi_g_rad", c.coupling.phi_g);
        g.done();
    }
    if (!root.has("qew")) throw ConfigError("qew: required group is missing");
    {
        detail::Group g(root.raw("qew"), "qew");
        if (!g.has("sigma_t0_s")) throw ConfigError("qew.sigma_t0_s: required");
        g.number("sigma_t0_s", c.qew.sigma_t0);
        g.number("L_D_m", c.qew.L_D);
        g.done();
    }
    if (root.has("pinem")) {
        detail::Group g(root.raw("pinem"), "pinem");
        PinemConfig p;
        if (!g.has("two_gL")) throw ConfigError("pinem.two_gL: required when the pinem group is present");
        g.number("two_gL", p.two_gL);
        g.number("phi0_rad", p.phi0);
        p.omega_b = c.tls.omega21;
        g.number("omega_b_rad_per_s", p.omega_b);
        c.pinem = p;
        g.done();
    }
    if (root.has("numeric")) {
        detail::Group g(root.raw("numeric"), "numeric");
        g.boolean("enabled", c.numeric.enabled);
        g.integer("N", c.numeric.N);
        g.number("P_cutoff_factor", c.numeric.P_cutoff_factor);
        g.number("dt_factor", c.numeric.dt_factor);
        g.choice("method", c.numeric.method, detail::method_names);
        g.choice("kernel", c.numeric.kernel, detail::kernel_names);
        g.integer("record_every", c.numeric.record_every);
        g.done();
    }
    if (root.has("interaction")) {
        detail::Group g(root.raw("interaction"), "interaction");
        g.choice("zeta_mode", c.interaction.zeta_mode, detail::zeta_names);
        g.number("zeta_rad", c.interaction.zeta);
        g.choice("recoil_sign", c.interaction.recoil_sign, detail::recoil_names);
        g.integer("harmonic_n", c.interaction.harmonic_n);
        g.number("gamma_b", c.interaction.gamma_b);
        g.choice("transition_form", c.interaction.transition_form, detail::form_names);
        g.done();
    }
    if (root.has("gates")) {
        detail::Group g(root.raw("gates"), "gates");
        g.number("norm_tol", c.gates.norm_tol);
        g.number("energy_rel_tol_closed", c.gates.energy_rel_tol_closed);
        g.number("energy_rel_tol_numeric", c.gates.energy_rel_tol_numeric);
        g.number("numeric_linf_rel_tol", c.gates.numeric_linf_rel_tol);
        g.done();
    }
    if (root.has("scan")) {
        detail::Group g(root.raw("scan"), "scan");
        g.choice("axis", c.scan.axis, detail::axis_names);
        g.number("start", c.scan.start);
        g.number("stop", c.scan.stop);
        g.integer("steps", c.scan.steps);
        g.done();
    }
    if (root.has("bunching")) {
        detail::Group g(root.raw("bunching"), "bunching");
        g.number("L_D_start_m", c.bunching.L_start);
        g.number("L_D_stop_m", c.bunching.L_stop);
        g.integer("steps", c.bunching.steps);
        g.integer("harmonics", c.bunching.harmonics);
        if (g.has("marks_m")) {
            const json& m = g.raw("marks_m");
            if (!m.is_array()) throw ConfigError("bunching.marks_m: expected an array of numbers");
            for (const auto& v : m) {
                if (!v.is_number()) throw ConfigError("bunching.marks_m: expected an array of numbers");
                c.bunching.marks.push_back(v.get<double>());
            }
        }
        g.integer("profile_points", c.bunching.profile_points);
        g.number("profile_half_width_s", c.bunching.profile_half_width);
        g.choice("density_model", c.bunching.model, detail::density_names);
        g.done();
    }
    if (root.has("wigner")) {
        detail::Group g(root.raw("wigner"), "wigner");
        g.integer("N", c.wigner.N);
        g.integer("M", c.wigner.M);
        g.done();
    }
    if (root.has("meta")) {
        detail::Group g(root.raw("meta"), "meta");
        g.text("label", c.meta.label);
        if (g.has("inferred")) {
            const json& m = g.raw("inferred");
            if (!m.is_array()) throw ConfigError("meta.inferred: expected an array of strings");
            for (const auto& v : m) {
                if (!v.is_string()) throw ConfigError("meta.inferred: expected an array of strings");
                c.meta.inferred.push_back(v.get<std::string>());
            }
        }
        g.done();
    }
    root.done();
    validate(c);
    return c;
}

// Fully resolved document; every default is written out.
inline json to_json(const ScenarioConfig& c) {
    using namespace detail;
    json j;
    j["beam"] = {{"beta", c.beam.beta}};
    j["tls"] = {{"omega21_rad_per_s", c.tls.omega21},
                {"r_perp0_m", c.tls.r_perp0},
                {"theta_rad", c.tls.theta},
                {"phi_rad", c.tls.phi}};
    if (c.tls.dipole)
        j["tls"]["dipole_C_m"] = {{"z", complex_json(c.tls.dipole->z)}, {"perp", complex_json(c.tls.dipole->perp)}};
    else
        j["tls"]["dipole_C_m"] = nullptr;
    j["coupling"] = {{"mode", name_of(c.coupling.mode, coupling_names)}, {"g_abs", c.coupling.g_abs}, {"phi_g_rad", c.coupling.phi_g}};
    j["qew"] = {{"sigma_t0_s", c.qew.sigma_t0}, {"L_D_m", c.qew.L_D}};
    if (c.pinem)
        j["pinem"] = {{"two_gL", c.pinem->two_gL}, {"phi0_rad", c.pinem->phi0}, {"omega_b_rad_per_s", c.pinem->omega_b}};
    else
        j["pinem"] = nullptr;
    j["numeric"] = {{"enabled", c.numeric.enabled},
                    {"N", c.numeric.N},
                    {"P_cutoff_factor", c.numeric.P_cutoff_factor},
                    {"dt_factor", c.numeric.dt_factor},
                    {"method", name_of(c.numeric.method, method_names)},
                    {"kernel", name_of(c.numeric.kernel, kernel_names)},
                    {"record_every", c.numeric.record_every}};
    j["interaction"] = {{"zeta_mode", name_of(c.interaction.zeta_mode, zeta_names)},
                        {"zeta_rad", c.interaction.zeta ? json(*c.interaction.zeta) : json(nullptr)},
                        {"recoil_sign", name_of(c.interaction.recoil_sign, recoil_names)},
                        {"harmonic_n", c.interaction.harmonic_n},
                        {"gamma_b", c.interaction.gamma_b ? json(*c.interaction.gamma_b) : json(nullptr)},
                        {"transition_form", name_of(c.interaction.transition_form, form_names)}};
    j["gates"] = {{"norm_tol", c.gates.norm_tol},
                  {"energy_rel_tol_closed", c.gates.energy_rel_tol_closed},
                  {"energy_rel_tol_numeric", c.gates.energy_rel_tol_numeric},
                  {"numeric_linf_rel_tol", c.gates.numeric_linf_rel_tol}};
    j["scan"] = {{"axis", name_of(c.scan.axis, axis_names)}, {"start", c.scan.start}, {"stop", c.scan.stop}, {"steps", c.scan.steps}};
    j["bunching"] = {{"L_D_start_m", c.bunching.L_start},
                     {"L_D_stop_m", c.bunching.L_stop ? json(*c.bunching.L_stop) : json(nullptr)},
                     {"steps", c.bunching.steps},
                     {"harmonics", c.bunching.harmonics},
                     {"marks_m", c.bunching.marks},
                     {"profile_points", c.bunching.profile_points},
                     {"profile_half_width_s", c.bunching.profile_half_width ? json(*c.bunching.profile_half_width) : json(nullptr)},
                     {"density_model", name_of(c.bunching.model, density_names)}};
    j["wigner"] = {{"N", c.wigner.N}, {"M", c.wigner.M}};
    j["meta"] = {{"label", c.meta.label}, {"inferred", c.meta.inferred}};
    return j;
}

inline ScenarioConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return parse_config(doc);
}

}  // namespace feberi::cli
