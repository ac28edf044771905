#pragma once

// Contingency tables and forecast skill scores (TSS, weighted TSS, HSS).
// Flaring is the positive class throughout.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "slimtsf/data.hpp"
#include "slimtsf/error.hpp"
#include "slimtsf/io.hpp"

namespace slimtsf {

struct ContingencyTable {
    std::uint64_t tp = 0;
    std::uint64_t fn = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;

    std::uint64_t positives() const { return tp + fn; }
    std::uint64_t negatives() const { return fp + tn; }
    std::uint64_t total() const { return tp + fn + fp + tn; }

    friend bool operator==(const ContingencyTable&, const ContingencyTable&) = default;
};

inline ContingencyTable contingency(std::span<const BinaryLabel> y_true, std::span<const BinaryLabel> y_pred) {
    if (y_true.size() != y_pred.size())
        throw ArgumentError("label vectors differ in length: " + std::to_string(y_true.size()) + " vs " +
                            std::to_string(y_pred.size()));
    if (y_true.empty()) throw ArgumentError("contingency table of empty label vectors");
    ContingencyTable t;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const bool actual = y_true[i] == BinaryLabel::Flaring;
        const bool predicted = y_pred[i] == BinaryLabel::Flaring;
        if (actual) (predicted ? t.tp : t.fn)++;
        else (predicted ? t.fp : t.tn)++;
    }
    return t;
}

namespace detail {

inline void require_both_classes(const ContingencyTable& t, const char* score) {
    if (t.positives() == 0 || t.negatives() == 0)
        throw UndefinedScoreError(std::string(score) + " is undefined: table has P=" + std::to_string(t.positives()) +
                                  ", N=" + std::to_string(t.negatives()));
}

} // namespace detail

inline double true_positive_rate(const ContingencyTable& t) {
    detail::require_both_classes(t, "TPR");
    return static_cast<double>(t.tp) / static_cast<double>(t.positives());
}

inline double true_negative_rate(const ContingencyTable& t) {
    detail::require_both_classes(t, "TNR");
    return static_cast<double>(t.tn) / static_cast<double>(t.negatives());
}

/// Probability of false detection, FP / (FP + TN).
inline double false_positive_rate(const ContingencyTable& t) {
    detail::require_both_classes(t, "POFD");
    return static_cast<double>(t.fp) / static_cast<double>(t.negatives());
}

/// True Skill Statistic: TP/(TP+FN) - FP/(FP+TN). Requires P > 0 and N > 0.
inline double tss(const ContingencyTable& t) {
    detail::require_both_classes(t, "TSS");
    return static_cast<double>(t.tp) / static_cast<double>(t.positives()) -
           static_cast<double>(t.fp) / static_cast<double>(t.negatives());
}

/// alpha * TPR + (2 - alpha) * TNR - 1 with 0 < alpha < 2.
///
/// alpha / 2 is the relative importance of detecting flares; alpha = 1.5
/// weights detection three times as much as correct rejection. alpha = 1
/// reproduces tss() exactly.
inline double weighted_tss(const ContingencyTable& t, double alpha) {
    if (!(alpha > 0.0 && alpha < 2.0)) throw ArgumentError("weighted TSS alpha must lie in (0, 2)");
    detail::require_both_classes(t, "weighted TSS");
    if (alpha == 1.0) return tss(t);
    return alpha * true_positive_rate(t) + (2.0 - alpha) * true_negative_rate(t) - 1.0;
}

/// Heidke Skill Score: 2(TP*TN - FN*FP) / (P(FN+TN) + N(TP+FP)).
inline double hss(const ContingencyTable& t) {
    const double tp = static_cast<double>(t.tp), fn = static_cast<double>(t.fn);
    const double fp = static_cast<double>(t.fp), tn = static_cast<double>(t.tn);
    const double p = tp + fn, n = fp + tn;
    const double denom = p * (fn + tn) + n * (tp + fp);
    if (!(denom > 0.0)) throw UndefinedScoreError("HSS is undefined: zero denominator");
    return 2.0 * (tp * tn - fn * fp) / denom;
}

struct SkillReport {
    ContingencyTable table;
    double tss = 0.0;
    double hss = 0.0;
    std::map<double, double> wtss; // alpha -> weighted TSS
    double tpr = 0.0;
    double tnr = 0.0;
    double pofd = 0.0;
};

inline SkillReport skill_report(const ContingencyTable& t, std::span<const double> alphas) {
    SkillReport r;
    r.table = t;
    r.tss = tss(t);
    r.hss = hss(t);
    r.tpr = true_positive_rate(t);
    r.tnr = true_negative_rate(t);
    r.pofd = false_positive_rate(t);
    for (double a : alphas) r.wtss[a] = weighted_tss(t, a);
    return r;
}

inline SkillReport skill_report(std::span<const BinaryLabel> y_true, std::span<const BinaryLabel> y_pred,
                                std::span<const double> alphas) {
    return skill_report(contingency(y_true, y_pred), alphas);
}

/// Key used for an alpha inside JSON objects and CSV columns, e.g. "1.5".
inline std::string alpha_key(double alpha) { return io::format_double(alpha); }

inline nlohmann::json to_json(const ContingencyTable& t) {
    return {{"tp", t.tp}, {"fn", t.fn}, {"fp", t.fp}, {"tn", t.tn}};
}

inline nlohmann::json to_json(const SkillReport& r) {
    nlohmann::json w = nlohmann::json::object();
    for (const auto& [a, v] : r.wtss) w[alpha_key(a)] = v;
    return {{"table", to_json(r.table)}, {"tss", r.tss}, {"hss", r.hss}, {"wtss", w},
            {"tpr", r.tpr}, {"tnr", r.tnr}, {"pofd", r.pofd}};
}

inline std::string skill_csv_header(const SkillReport& r) {
    std::string h = "tp,fn,fp,tn,tss,hss,tpr,tnr,pofd";
    for (const auto& [a, v] : r.wtss) h += ",wtss_" + alpha_key(a);
    return h;
}

inline std::string skill_csv_row(const SkillReport& r) {
    std::string row = std::to_string(r.table.tp) + "," + std::to_string(r.table.fn) + "," + std::to_string(r.table.fp) +
                      "," + std::to_string(r.table.tn);
    for (double v : {r.tss, r.hss, r.tpr, r.tnr, r.pofd}) row += "," + io::format_double(v);
    for (const auto& [a, v] : r.wtss) row += "," + io::format_double(v);
    return row;
}

} // namespace slimtsf
