#include "alphabox/net.hpp"

#include <cmath>

namespace alphabox {

std::string to_string(Activation a) {
    return a == Activation::relu ? "relu" : "identity";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw InvalidArgument("unknown activation '" + s + "'");
}

bool MlpArchitecture::has_dropout() const {
    for (double r : dropout_rates)
        if (r > 0.0) return true;
    return false;
}

void MlpArchitecture::validate() const {
    if (widths.size() < 2) throw InvalidArgument("architecture needs at least one weight layer");
    for (auto w : widths)
        if (w == 0) throw InvalidArgument("layer widths must be >= 1");
    if (activations.size() != widths.size() - 2)
        throw InvalidArgument("need one activation per hidden layer");
    if (dropout_rates.size() != num_layers())
        throw InvalidArgument("need one dropout rate per weight layer");
    for (double r : dropout_rates)
        if (!(r >= 0.0 && r < 1.0)) throw InvalidArgument("dropout rate must lie in [0, 1)");
}

MlpArchitecture MlpArchitecture::deterministic() const {
    MlpArchitecture a = *this;
    for (auto& r : a.dropout_rates) r = 0.0;
    return a;
}

MlpArchitecture MlpArchitecture::make(std::size_t d_in, const std::vector<std::size_t>& hidden,
                                      std::size_t d_out, double input_dropout,
                                      double hidden_dropout, Activation act) {
    MlpArchitecture a;
    a.widths.push_back(d_in);
    for (auto h : hidden) a.widths.push_back(h);
    a.widths.push_back(d_out);
    a.activations.assign(hidden.size(), act);
    a.dropout_rates.push_back(input_dropout);
    for (std::size_t i = 0; i < hidden.size(); ++i) a.dropout_rates.push_back(hidden_dropout);
    a.validate();
    return a;
}

ParameterSet ParameterSet::zeros(const MlpArchitecture& arch) {
    arch.validate();
    ParameterSet p;
    for (std::size_t i = 0; i < arch.num_layers(); ++i) {
        const auto rows = static_cast<Eigen::Index>(arch.widths[i]);
        const auto cols = static_cast<Eigen::Index>(arch.widths[i + 1]);
        p.weights.emplace_back(Matrix::Zero(rows, cols));
        p.biases.emplace_back(Vector::Zero(cols));
    }
    return p;
}

std::size_t ParameterSet::size() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < weights.size(); ++i)
        n += static_cast<std::size_t>(weights[i].size() + biases[i].size());
    return n;
}

// Layout: M_0 (row-major), b_0, M_1, b_1, ...
std::vector<double> ParameterSet::flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        out.insert(out.end(), weights[i].data(), weights[i].data() + weights[i].size());
        out.insert(out.end(), biases[i].data(), biases[i].data() + biases[i].size());
    }
    return out;
}

void ParameterSet::assign(std::span<const double> flat) {
    if (flat.size() != size()) throw InvalidArgument("flat parameter length mismatch");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        for (Eigen::Index j = 0; j < weights[i].size(); ++j) weights[i].data()[j] = flat[pos++];
        for (Eigen::Index j = 0; j < biases[i].size(); ++j) biases[i][j] = flat[pos++];
    }
}

void ParameterSet::check_matches(const MlpArchitecture& arch) const {
    if (weights.size() != arch.num_layers() || biases.size() != arch.num_layers())
        throw InvalidArgument("parameter layer count does not match architecture");
    for (std::size_t i = 0; i < arch.num_layers(); ++i) {
        if (static_cast<std::size_t>(weights[i].rows()) != arch.widths[i] ||
            static_cast<std::size_t>(weights[i].cols()) != arch.widths[i + 1] ||
            static_cast<std::size_t>(biases[i].size()) != arch.widths[i + 1])
            throw InvalidArgument("parameter shapes do not match architecture at layer " +
                                  std::to_string(i));
    }
}

bool ParameterSet::all_finite() const {
    for (std::size_t i = 0; i < weights.size(); ++i)
        if (!weights[i].allFinite() || !biases[i].allFinite()) return false;
    return true;
}

ParameterSet& ParameterSet::operator+=(const ParameterSet& o) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] += o.weights[i];
        biases[i] += o.biases[i];
    }
    return *this;
}

ParameterSet& ParameterSet::operator*=(double s) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] *= s;
        biases[i] *= s;
    }
    return *this;
}

ParameterSet init_parameters(const MlpArchitecture& arch, RngStream& rng) {
    ParameterSet p = ParameterSet::zeros(arch);
    for (std::size_t i = 0; i < arch.num_layers(); ++i) {
        const double sd = 1.0 / std::sqrt(static_cast<double>(arch.widths[i]));
        for (Eigen::Index j = 0; j < p.weights[i].size(); ++j)
            p.weights[i].data()[j] = sd * rng.normal();
    }
    return p;
}

MaskSet sample_masks(const MlpArchitecture& arch, std::size_t batch, std::size_t samples,
                     RngStream& rng) {
    MaskSet m;
    m.batch = batch;
    m.samples = samples;
    const auto rows = static_cast<Eigen::Index>(batch * samples);
    for (std::size_t i = 0; i < arch.num_layers(); ++i)
        m.layers.emplace_back(Matrix::Ones(rows, static_cast<Eigen::Index>(arch.widths[i])));
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (std::size_t i = 0; i < arch.num_layers(); ++i) {
            const double p_keep = 1.0 - arch.dropout_rates[i];
            if (p_keep == 1.0) continue;
            auto row = m.layers[i].row(r);
            for (Eigen::Index u = 0; u < row.size(); ++u)
                row[u] = rng.uniform() < p_keep ? 1.0 : 0.0;
        }
    }
    return m;
}

ForwardResult forward_with_masks(const ParameterSet& params, const MlpArchitecture& arch,
                                 const Matrix& inputs, MaskSet masks) {
    arch.validate();
    params.check_matches(arch);
    if (static_cast<std::size_t>(inputs.cols()) != arch.input_dim())
        throw InvalidArgument("input width does not match architecture");
    const std::size_t batch = static_cast<std::size_t>(inputs.rows());
    if (masks.batch != batch || masks.layers.size() != arch.num_layers())
        throw InvalidArgument("mask set does not match batch");
    const std::size_t samples = masks.samples;
    if (samples == 0) throw InvalidArgument("need at least one sample");
    const auto rows = static_cast<Eigen::Index>(batch * samples);

    ForwardResult out;
    out.record.batch = batch;
    out.record.samples = samples;

    Matrix h(rows, inputs.cols());
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t k = 0; k < samples; ++k)
            h.row(static_cast<Eigen::Index>(n * samples + k)) = inputs.row(static_cast<Eigen::Index>(n));

    for (std::size_t i = 0; i < arch.num_layers(); ++i) {
        const Matrix& mask = masks.layers[i];
        if (mask.rows() != rows || mask.cols() != h.cols())
            throw InvalidArgument("mask shape mismatch at layer " + std::to_string(i));
        Matrix masked = h.cwiseProduct(mask);
        Matrix z = masked * params.weights[i];
        z.rowwise() += params.biases[i].transpose();
        const bool last = i + 1 == arch.num_layers();
        if (!last && arch.activations[i] == Activation::relu)
            h = z.cwiseMax(0.0);
        else
            h = z;
        out.record.masked_inputs.push_back(std::move(masked));
        out.record.pre_activations.push_back(std::move(z));
    }

    const std::size_t d_out = arch.output_dim();
    out.logits = Tensor({batch, samples, d_out});
    out.logits.as_matrix(batch * samples, d_out) = h;
    out.masks = std::move(masks);
    return out;
}

ForwardResult forward_stochastic(const ParameterSet& params, const MlpArchitecture& arch,
                                 const Matrix& inputs, std::size_t samples, RngStream& rng) {
    if (samples == 0) throw InvalidArgument("K must be >= 1");
    arch.validate();
    MaskSet masks = sample_masks(arch, static_cast<std::size_t>(inputs.rows()), samples, rng);
    return forward_with_masks(params, arch, inputs, std::move(masks));
}

namespace {

// Backpropagates dLoss/dLogits through every layer. Fills grads when non-null
// and returns dLoss/d(network input rows) when want_input is set.
Matrix backprop(const ParameterSet& params, const MlpArchitecture& arch,
                const ForwardRecord& record, const MaskSet& masks, Matrix delta,
                ParameterSet* grads, bool want_input) {
    const std::size_t layers = arch.num_layers();
    for (std::size_t li = layers; li-- > 0;) {
        if (grads != nullptr) {
            grads->weights[li].noalias() = record.masked_inputs[li].transpose() * delta;
            grads->biases[li] = delta.colwise().sum().transpose();
        }
        if (li == 0 && !want_input) break;
        Matrix up = (delta * params.weights[li].transpose()).cwiseProduct(masks.layers[li]);
        if (li == 0) return up;
        if (arch.activations[li - 1] == Activation::relu)
            up = up.cwiseProduct(
                (record.pre_activations[li - 1].array() > 0.0).cast<double>().matrix());
        delta = std::move(up);
    }
    return {};
}

void check_record(const ParameterSet& params, const MlpArchitecture& arch,
                  const ForwardRecord& record, const MaskSet& masks) {
    arch.validate();
    params.check_matches(arch);
    const auto rows = static_cast<Eigen::Index>(record.batch * record.samples);
    if (record.masked_inputs.size() != arch.num_layers() ||
        record.pre_activations.size() != arch.num_layers() ||
        masks.layers.size() != arch.num_layers() || masks.batch != record.batch ||
        masks.samples != record.samples)
        throw InvalidArgument("stale forward record");
    for (std::size_t i = 0; i < arch.num_layers(); ++i) {
        if (record.masked_inputs[i].rows() != rows ||
            static_cast<std::size_t>(record.masked_inputs[i].cols()) != arch.widths[i] ||
            record.pre_activations[i].rows() != rows ||
            static_cast<std::size_t>(record.pre_activations[i].cols()) != arch.widths[i + 1])
            throw InvalidArgument("stale forward record");
    }
}

} // namespace

ParameterSet backward_params(const ParameterSet& params, const MlpArchitecture& arch,
                             const ForwardRecord& record, const MaskSet& masks,
                             const Tensor& dlogits) {
    check_record(params, arch, record, masks);
    const std::size_t d_out = arch.output_dim();
    if (dlogits.rank() != 3 || dlogits.dim(0) != record.batch ||
        dlogits.dim(1) != record.samples || dlogits.dim(2) != d_out)
        throw InvalidArgument("upstream gradient shape mismatch");
    ParameterSet grads = ParameterSet::zeros(arch);
    backprop(params, arch, record, masks, dlogits.as_matrix(record.batch * record.samples, d_out),
             &grads, false);
    return grads;
}

Vector input_gradient(const ParameterSet& params, const MlpArchitecture& arch, const Vector& x,
                      const MaskSet& masks, const Matrix& dlogits) {
    if (static_cast<std::size_t>(x.size()) != arch.input_dim())
        throw InvalidArgument("input width does not match architecture");
    if (masks.batch != 1) throw InvalidArgument("input_gradient takes masks for a single input");
    if (static_cast<std::size_t>(dlogits.rows()) != masks.samples ||
        static_cast<std::size_t>(dlogits.cols()) != arch.output_dim())
        throw InvalidArgument("upstream gradient shape mismatch");
    const Matrix row = x.transpose();
    ForwardResult fwd = forward_with_masks(params, arch, row, masks);
    Matrix g = backprop(params, arch, fwd.record, fwd.masks, dlogits, nullptr, true);
    return g.colwise().sum().transpose();
}

} // namespace alphabox
