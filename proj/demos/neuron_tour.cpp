// Drives one neuron of each kind with the same input and prints the spike trains.

#include <iomanip>
#include <iostream>

#include "psn/verify.hpp"

using namespace psn;

namespace {

void print_row(const std::string& name, const Tensor<float>& v)
{
    std::cout << std::left << std::setw(26) << name << std::right;
    for (float x : v.data())
        std::cout << std::setw(6) << std::fixed << std::setprecision(2) << x;
    std::cout << "\n";
}

} // namespace

int main()
{
    constexpr std::size_t steps = 12;
    Tensor<float> x({steps, 1}, {1.2f, 1.2f, 0.0f, 1.8f, 0.6f, 0.0f, 0.0f, 2.4f, 0.4f, 0.4f, 0.4f, 1.6f});
    print_row("input", x);

    const auto lif = VanillaNeuronParams::lif(2.0, ResetMode::hard);
    print_row("LIF hard reset (serial)", vanilla_sequence(x, lif).s);

    const auto lif_free = VanillaNeuronParams::lif(2.0, ResetMode::none);
    const auto scan_out = parallel_no_reset(x, lif_free);
    const auto psn_out = psn_forward(x, verify::psn_with_weights(steps, 2.0, 1.0));
    print_row("LIF no reset H (scan)", scan_out.h);
    print_row("PSN LIF-weights H", psn_out.h);
    print_row("LIF no reset spikes", scan_out.s);
    print_row("PSN LIF-weights spikes", psn_out.s);

    // Order-2 window: each H[t] sees only x[t-1] and x[t].
    auto masked = MaskedPSNParams<float>{verify::psn_with_weights(steps, 0.0, 1.0).weight,
                                         Tensor<float>({steps}, 1.0f), 2, 1.0};
    print_row("masked PSN k=2 H", masked_psn_forward(x, masked).h);

    auto sliding = SlidingPSNParams<float>::init(2);
    sliding.weight.mutable_data()[0] = 0.5f;
    sliding.weight.mutable_data()[1] = 1.0f;
    sliding.threshold.mutable_data()[0] = 1.0f;
    print_row("sliding PSN k=2 H", spsn_forward(x, sliding).h);
    print_row("sliding PSN k=2 spikes", spsn_forward(x, sliding).s);
}
