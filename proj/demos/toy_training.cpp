// Trains PSN and LIF classifiers on the synthetic two-stroke task and prints
// test accuracy per epoch. Usage: toy_training [epochs]

#include <cstdlib>
#include <iomanip>
#include <iostream>

#include "psn/training.hpp"

using namespace psn;

int main(int argc, char** argv)
{
    const int epochs = argc > 1 ? std::atoi(argv[1]) : 10;
    auto ds = data::synth_toy_dataset(4, 500, 7, 125);
    const auto stats = data::compute_stats(ds.train.images);
    const auto train_set = data::columnize(ds.train, true, stats, "toy");
    const auto test_set = data::columnize(ds.test, true, stats, "toy");

    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = 3;
    for (auto kind : {NeuronKind::psn, NeuronKind::lif}) {
        Model model(ModelSpec::mlp(16, {64, 64}, 4, kind, 16, 0, 1));
        std::cout << to_string(kind) << " (" << model.parameter_count() << " parameters)\n";
        train(model, train_set, &test_set, cfg, [](const EpochRecord& r) {
            std::cout << "  epoch " << std::setw(3) << r.epoch << "  loss " << std::fixed << std::setprecision(4)
                      << r.train_loss << "  test acc " << *r.test_accuracy << "\n";
        });
    }
}
