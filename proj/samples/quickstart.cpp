// Featurize a synthetic dataset, train a forest on four partitions and score
// the fifth, then print the ten most important features.

#include <cstdio>

#include "slimtsf/slimtsf.hpp"

int main() {
    using namespace slimtsf;

    PlantedSignalSpec spec;
    spec.n_instances = 200;
    spec.seed = 7;
    const Dataset ds = make_planted_dataset(spec);
    const auto [train_ds, test_ds] = partition_split(ds, {"P1", "P2", "P3", "P4"}, {"P5"});

    const ScaleGrid grid = parse_scale_grid("12:6,20:10");
    const FeatureMatrix train = featurize_dataset(train_ds, grid);
    const FeatureMatrix test = featurize_dataset(test_ds, grid);

    ForestParams params;
    params.seed = 1;
    const ForestModel model = train_forest(train, params);

    std::vector<BinaryLabel> predicted;
    for (const auto& p : predict_dataset(model, test)) predicted.push_back(p.label);
    const std::vector<double> alphas{1.0, 1.5};
    const SkillReport report = skill_report(test.labels, predicted, alphas);
    std::printf("features=%zu  TSS=%.3f  HSS=%.3f  wTSS(1.5)=%.3f\n", train.cols(), report.tss, report.hss,
                report.wtss.at(1.5));

    const auto ranking = rank_features(model.feature_ids, model.importances);
    for (std::size_t i = 0; i < 10 && i < ranking.size(); ++i)
        std::printf("  %2zu  %-28s %.4f\n", i + 1, ranking[i].id.c_str(), ranking[i].importance);
    return 0;
}
