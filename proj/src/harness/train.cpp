#include "alphabox/harness/train.hpp"

#include <chrono>
#include <cmath>

namespace alphabox::harness {

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, double momentum)
    : kind_(kind), lr_(learning_rate), momentum_(momentum) {
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning rate must be > 0");
}

void Optimizer::step(ParameterSet& params, const ParameterSet& grad) {
    auto p = params.flatten();
    const auto g = grad.flatten();
    if (g.size() != p.size()) throw InvalidArgument("gradient does not match parameters");
    if (m_.empty()) {
        m_.assign(p.size(), 0.0);
        v_.assign(p.size(), 0.0);
    }
    ++t_;
    if (kind_ == OptimizerKind::adam) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[i] = b1 * m_[i] + (1.0 - b1) * g[i];
            v_[i] = b2 * v_[i] + (1.0 - b2) * g[i] * g[i];
            p[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
        }
    } else {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m_[i] = momentum_ * m_[i] + g[i];
            p[i] -= lr_ * m_[i];
        }
    }
    params.assign(p);
}

TrainingDiverged::TrainingDiverged(std::size_t e, ParameterSet p)
    : RuntimeFailure("diverged: non-finite loss at epoch " + std::to_string(e)),
      epoch(e),
      last_finite(std::move(p)) {}

EvalMetrics evaluate_model(ModelRef model, const Dataset& data, std::size_t k_test, double tau,
                           const RngStream& base, const Vector& target_scale) {
    if (data.input_dim() != model.arch.input_dim() || data.output_dim() != model.arch.output_dim())
        throw InvalidArgument("dataset dimensions (" + std::to_string(data.input_dim()) + " -> " +
                              std::to_string(data.output_dim()) + ") do not match the model (" +
                              std::to_string(model.arch.input_dim()) + " -> " +
                              std::to_string(model.arch.output_dim()) + ")");
    if (data.size() == 0) throw InvalidArgument("cannot evaluate on an empty dataset");
    EvalMetrics m;
    m.n = data.size();
    const double n = static_cast<double>(m.n);
    if (data.task == Task::classification) {
        const auto s = mc_predict_dataset(model, data.inputs, k_test, base, &data.labels);
        double nll = 0.0, ent = 0.0, correct = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            nll -= s[i].log_likelihood;
            ent += s[i].entropy;
            if (argmax_lowest(s[i].mean) == data.labels[i]) correct += 1.0;
        }
        m.nll = nll / n;
        m.mean_entropy = ent / n;
        m.accuracy = correct / n;
        return m;
    }
    const Eigen::Index d = data.targets.cols();
    Vector scale = target_scale.size() == 0 ? Vector::Ones(d) : target_scale;
    if (scale.size() != d) throw InvalidArgument("target scale has the wrong length");
    const double log_scale = scale.array().log().sum() / static_cast<double>(d);
    const auto s = mc_predict_regression(model, data.inputs, data.targets, k_test, tau, base, log_scale);
    double nll = 0.0, se = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        nll -= s[i].log_likelihood;
        const auto r = static_cast<Eigen::Index>(i);
        se += ((s[i].mean - data.targets.row(r).transpose()).array() * scale.array()).square().sum();
    }
    m.nll = nll / n;
    m.rmse = std::sqrt(se / (n * static_cast<double>(d)));
    return m;
}

TrainResult train_model(const TrainOptions& opt, const Dataset& train, const Dataset* test) {
    opt.arch.validate();
    if (train.size() == 0) throw InvalidArgument("training set is empty");
    if (train.input_dim() != opt.arch.input_dim() || train.output_dim() != opt.arch.output_dim())
        throw InvalidArgument("training data does not match the architecture");
    if (opt.batch_size == 0) throw InvalidArgument("batch size must be >= 1");
    AlphaObjectiveConfig cfg = opt.objective;
    cfg.task = train.task;
    cfg.dataset_size = train.size();
    cfg.validate(opt.arch.num_layers());

    const RngStream root(opt.seed);
    RngStream init_rng = root.substream(0);
    RngStream shuffle_rng = root.substream(1);
    RngStream mask_rng = root.substream(2);
    const RngStream eval_root = root.substream(3);

    TrainResult result;
    result.params = init_parameters(opt.arch, init_rng);
    Optimizer optimizer(opt.optimizer, opt.learning_rate, opt.momentum);
    const std::size_t n = train.size();
    std::size_t steps = 0;

    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto order = random_permutation(shuffle_rng, n);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += opt.batch_size) {
            const std::size_t end = std::min(n, start + opt.batch_size);
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
            const Batch batch = train.batch(rows);
            ObjectiveValue v;
            try {
                v = total_objective(result.params, opt.arch, batch, cfg, mask_rng);
            } catch (const InvalidArgument&) {
                // Inputs were checked up front; after a step, a throw here means overflow.
                if (steps == 0) throw;
                throw TrainingDiverged(epoch, result.params);
            }
            if (!std::isfinite(v.value) || !v.gradient.all_finite())
                throw TrainingDiverged(epoch, result.params);
            ParameterSet next = result.params;
            optimizer.step(next, v.gradient);
            if (!next.all_finite()) throw TrainingDiverged(epoch, result.params);
            result.params = std::move(next);
            ++steps;
            loss_sum += v.value / static_cast<double>(n);
            ++batches;
        }
        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = loss_sum / static_cast<double>(batches);
        em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (test && (epoch % opt.eval_every == 0 || epoch == opt.epochs)) {
            em.evaluated = true;
            em.test = evaluate_model({result.params, opt.arch}, *test, opt.k_test, cfg.tau,
                                     eval_root.substream(epoch), opt.target_scale);
        }
        result.log.push_back(em);
        if (opt.on_epoch) opt.on_epoch(em);
    }
    return result;
}

TrainOptions make_train_options(const ExperimentConfig& c, const Dataset& train, double tau) {
    TrainOptions o;
    o.arch = c.make_architecture(train.input_dim(), train.output_dim());
    o.objective.task = c.task;
    o.objective.alpha = c.objective.alpha;
    o.objective.samples = c.objective.samples;
    o.objective.tau = tau;
    o.objective.dataset_size = train.size();
    o.objective.include_likelihood_constant = c.objective.include_likelihood_constant;
    o.objective.layer_reg = AlphaObjectiveConfig::default_layer_reg(o.arch, c.objective.weight_decay);
    o.optimizer = c.optimizer.kind;
    o.learning_rate = c.optimizer.learning_rate;
    o.momentum = c.optimizer.momentum;
    o.batch_size = c.effective_batch_size();
    o.epochs = c.optimizer.epochs;
    o.seed = c.seed;
    o.k_test = c.k_test;
    o.eval_every = c.eval_every;
    return o;
}

} // namespace alphabox::harness
