#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "alphabox/numerics.hpp"

namespace alphabox {

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Fully-connected network shape.
///
/// widths = [d_in, h_1, ..., h_L, d_out]; activations has one entry per hidden
/// layer; dropout_rates has one entry per weight layer and drops that layer's
/// input units (rows of its weight matrix).
struct MlpArchitecture {
    std::vector<std::size_t> widths;
    std::vector<Activation> activations;
    std::vector<double> dropout_rates;

    std::size_t num_layers() const noexcept { return widths.empty() ? 0 : widths.size() - 1; }
    std::size_t input_dim() const { return widths.front(); }
    std::size_t output_dim() const { return widths.back(); }
    bool has_dropout() const;
    void validate() const;

    /// Same shape with every dropout rate set to zero.
    MlpArchitecture deterministic() const;

    static MlpArchitecture make(std::size_t d_in, const std::vector<std::size_t>& hidden,
                                std::size_t d_out, double input_dropout, double hidden_dropout,
                                Activation act = Activation::relu);

    bool operator==(const MlpArchitecture&) const = default;
};

/// Weight matrices M_i (widths[i] x widths[i+1]) and bias vectors b_i.
struct ParameterSet {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    static ParameterSet zeros(const MlpArchitecture& arch);

    std::size_t size() const;
    std::vector<double> flatten() const;
    void assign(std::span<const double> flat);
    void check_matches(const MlpArchitecture& arch) const;
    bool all_finite() const;

    ParameterSet& operator+=(const ParameterSet& o);
    ParameterSet& operator*=(double s);
};

/// N(0, 1/fan_in) weights, zero biases.
ParameterSet init_parameters(const MlpArchitecture& arch, RngStream& rng);

/// Binary masks over each layer's input units, one row per (point n, sample k)
/// pair at row index n * samples + k.
struct MaskSet {
    std::size_t batch = 0;
    std::size_t samples = 0;
    std::vector<Matrix> layers;
};

/// Draws masks in (n, k, layer, unit) order, one uniform per unit. Layers
/// with dropout rate 0 get all-ones masks and consume no draws.
MaskSet sample_masks(const MlpArchitecture& arch, std::size_t batch, std::size_t samples,
                     RngStream& rng);

/// Per-layer values kept for the backward pass.
struct ForwardRecord {
    std::size_t batch = 0;
    std::size_t samples = 0;
    std::vector<Matrix> masked_inputs;    // (x_i ⊙ mask_i), (batch*samples) x widths[i]
    std::vector<Matrix> pre_activations;  // masked_inputs[i] * M_i + b_i
};

struct ForwardResult {
    Tensor logits;  // batch x samples x d_out
    MaskSet masks;
    ForwardRecord record;
};

ForwardResult forward_with_masks(const ParameterSet& params, const MlpArchitecture& arch,
                                 const Matrix& inputs, MaskSet masks);

/// K stochastic passes per input row with fresh masks for every (n, k).
/// No 1/p rescaling: the masked weights are the posterior sample.
ForwardResult forward_stochastic(const ParameterSet& params, const MlpArchitecture& arch,
                                 const Matrix& inputs, std::size_t samples, RngStream& rng);

/// Gradient of a scalar loss w.r.t. weights and biases given dLoss/dLogits
/// (batch x samples x d_out), summed over batch and samples.
ParameterSet backward_params(const ParameterSet& params, const MlpArchitecture& arch,
                             const ForwardRecord& record, const MaskSet& masks,
                             const Tensor& dlogits);

/// Gradient w.r.t. a single input x under fixed masks (samples rows), summed
/// over the samples. dlogits is samples x d_out.
Vector input_gradient(const ParameterSet& params, const MlpArchitecture& arch, const Vector& x,
                      const MaskSet& masks, const Matrix& dlogits);

} // namespace alphabox
