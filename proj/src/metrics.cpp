#include "unissda/metrics.hpp"

#include "unissda/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>

namespace unissda::metrics {

namespace {

bool in_group(const std::vector<int>& group, int class_id) {
    return std::find(group.begin(), group.end(), class_id) != group.end();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

FieldStats field_stats(const std::vector<double>& values) {
    FieldStats s;
    const auto n = static_cast<double>(values.size());
    for (const double v : values) s.mean += v;
    s.mean /= n;
    // Identical values must report exactly zero spread; the summed mean can
    // land one ulp off the common value, which the squares would amplify.
    const bool all_equal =
        std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); });
    if (all_equal) {
        s.mean = values.front();
    } else if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / (n - 1.0));
    }
    return s;
}

}  // namespace

std::string to_string(SplitKind kind) {
    return kind == SplitKind::inductive_test ? "inductive_test" : "transductive_unlabeled_train";
}

SplitKind split_kind_from_string(const std::string& name) {
    if (name == "inductive_test") return SplitKind::inductive_test;
    if (name == "transductive_unlabeled_train") return SplitKind::transductive_unlabeled_train;
    throw ConfigError("unknown split kind: " + name);
}

MetricsReport evaluate(const model::Model& m, const FeatureDataset& dataset,
                       const ClassGroups& groups, const model::LogitMask& mask, SplitKind kind) {
    if (dataset.size() == 0) throw DataError("evaluate: empty dataset");
    return tally(m.predict(dataset.features, mask), dataset.class_ids, groups, kind);
}

MetricsReport tally(const std::vector<int>& predictions, const std::vector<int>& truths,
                    const ClassGroups& groups, SplitKind kind) {
    if (predictions.size() != truths.size()) {
        throw ShapeError("tally: prediction and truth lengths differ");
    }
    if (truths.empty()) throw DataError("tally: empty sample set");

    MetricsReport r;
    r.split_kind = kind;
    r.n_samples = static_cast<long long>(truths.size());

    long long correct = 0, common_correct = 0, private_correct = 0;
    long long private_as_common = 0, predicted_private = 0;
    std::map<int, std::pair<long long, long long>> per_class;  // class -> (correct, total)
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const int truth = truths[i];
        const int pred = predictions[i];
        const bool hit = pred == truth;
        correct += hit;
        auto& cls = per_class[truth];
        cls.first += hit;
        cls.second += 1;
        if (in_group(groups.target_private, pred)) predicted_private += 1;
        if (in_group(groups.common, truth)) {
            r.n_common += 1;
            common_correct += hit;
        } else if (in_group(groups.target_private, truth)) {
            r.n_target_private += 1;
            private_correct += hit;
            if (in_group(groups.common, pred)) private_as_common += 1;
        }
    }

    const auto ratio = [](long long num, long long den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    r.overall_accuracy = ratio(correct, r.n_samples);
    r.common_accuracy = ratio(common_correct, r.n_common);
    r.target_private_accuracy = ratio(private_correct, r.n_target_private);
    r.private_as_common_rate = ratio(private_as_common, r.n_target_private);
    r.predicted_private_fraction = ratio(predicted_private, r.n_samples);
    r.has_private_samples = r.n_target_private > 0;
    for (const auto& [cls, counts] : per_class) {
        r.per_class_accuracy[cls] = ratio(counts.first, counts.second);
    }
    return r;
}

double private_as_common_rate(const std::vector<int>& predictions, const std::vector<int>& truths,
                              const ClassGroups& groups, bool* has_private) {
    if (predictions.size() != truths.size()) {
        throw ShapeError("private_as_common_rate: length mismatch");
    }
    long long n_private = 0, as_common = 0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (!in_group(groups.target_private, truths[i])) continue;
        n_private += 1;
        as_common += in_group(groups.common, predictions[i]);
    }
    if (has_private != nullptr) *has_private = n_private > 0;
    if (n_private == 0) return 0.0;
    return static_cast<double>(as_common) / static_cast<double>(n_private);
}

AggregateReport aggregate_runs(const std::vector<MetricsReport>& reports) {
    if (reports.empty()) throw ConfigError("aggregate_runs: no reports");
    std::vector<double> overall, common, target_private, pac, ppf;
    for (const auto& r : reports) {
        overall.push_back(r.overall_accuracy);
        common.push_back(r.common_accuracy);
        target_private.push_back(r.target_private_accuracy);
        pac.push_back(r.private_as_common_rate);
        ppf.push_back(r.predicted_private_fraction);
    }
    AggregateReport agg;
    agg.overall_accuracy = field_stats(overall);
    agg.common_accuracy = field_stats(common);
    agg.target_private_accuracy = field_stats(target_private);
    agg.private_as_common_rate = field_stats(pac);
    agg.predicted_private_fraction = field_stats(ppf);
    agg.n_runs = static_cast<long long>(reports.size());
    return agg;
}

std::string report_csv_header() {
    return "split_kind,n_samples,n_common,n_target_private,has_private_samples,"
           "overall_accuracy,common_accuracy,target_private_accuracy,"
           "private_as_common_rate,predicted_private_fraction,averaging";
}

std::string report_csv_row(const MetricsReport& r) {
    std::ostringstream out;
    out << to_string(r.split_kind) << ',' << r.n_samples << ',' << r.n_common << ','
        << r.n_target_private << ',' << (r.has_private_samples ? 1 : 0) << ','
        << fmt(r.overall_accuracy) << ',' << fmt(r.common_accuracy) << ','
        << fmt(r.target_private_accuracy) << ',' << fmt(r.private_as_common_rate) << ','
        << fmt(r.predicted_private_fraction) << ',' << r.averaging;
    return out.str();
}

std::string report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["split_kind"] = to_string(r.split_kind);
    j["n_samples"] = r.n_samples;
    j["n_common"] = r.n_common;
    j["n_target_private"] = r.n_target_private;
    j["has_private_samples"] = r.has_private_samples;
    j["overall_accuracy"] = r.overall_accuracy;
    j["common_accuracy"] = r.common_accuracy;
    j["target_private_accuracy"] = r.target_private_accuracy;
    j["private_as_common_rate"] = r.private_as_common_rate;
    j["predicted_private_fraction"] = r.predicted_private_fraction;
    j["averaging"] = r.averaging;
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [cls, acc] : r.per_class_accuracy) per_class[std::to_string(cls)] = acc;
    j["per_class_accuracy"] = per_class;
    return j.dump();
}

MetricsReport report_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    MetricsReport r;
    r.split_kind = split_kind_from_string(j.at("split_kind").get<std::string>());
    r.n_samples = j.at("n_samples").get<long long>();
    r.n_common = j.at("n_common").get<long long>();
    r.n_target_private = j.at("n_target_private").get<long long>();
    r.has_private_samples = j.at("has_private_samples").get<bool>();
    r.overall_accuracy = j.at("overall_accuracy").get<double>();
    r.common_accuracy = j.at("common_accuracy").get<double>();
    r.target_private_accuracy = j.at("target_private_accuracy").get<double>();
    r.private_as_common_rate = j.at("private_as_common_rate").get<double>();
    r.predicted_private_fraction = j.at("predicted_private_fraction").get<double>();
    r.averaging = j.at("averaging").get<std::string>();
    for (const auto& [key, value] : j.at("per_class_accuracy").items()) {
        r.per_class_accuracy[std::stoi(key)] = value.get<double>();
    }
    return r;
}

}  // namespace unissda::metrics
