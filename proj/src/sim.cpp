#include "ofmpc/sim.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <random>
#include <thread>

namespace ofmpc {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

void fill_normal(Mat& out, CounterRng rng) {
    std::normal_distribution<double> nd;
    for (Eigen::Index j = 0; j < out.size(); ++j) {
        out.data()[j] = nd(rng);
    }
}

Vec normal_vec(Eigen::Index n, CounterRng rng) {
    Mat m(n, 1);
    fill_normal(m, rng);
    return m.col(0);
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t episode, std::uint64_t step, std::uint64_t channel) {
    std::uint64_t k = mix64(seed + kGolden);
    k = mix64(k ^ (episode + kGolden));
    k = mix64(k ^ (step + 2 * kGolden));
    k = mix64(k ^ (channel + 3 * kGolden));
    key_ = k;
}

CounterRng::result_type CounterRng::operator()() {
    ++counter_;
    return mix64(key_ + counter_ * kGolden);
}

NoiseSampler::NoiseSampler(const SystemModel& m)
    : Fw_(linalg::psd_sqrt(m.Sigma_w)), Fv_(linalg::psd_sqrt(m.Sigma_v)), lambda_(m.lambda) {}

NoiseDraw NoiseSampler::draw(std::uint64_t seed, std::uint64_t episode, std::uint64_t step) const {
    NoiseDraw d;
    d.w = Fw_ * normal_vec(Fw_.cols(), CounterRng(seed, episode, step, std::uint64_t(NoiseChannel::process)));
    d.v = Fv_ * normal_vec(Fv_.cols(), CounterRng(seed, episode, step, std::uint64_t(NoiseChannel::measurement)));
    CounterRng loss(seed, episode, step, std::uint64_t(NoiseChannel::loss));
    d.gamma = std::bernoulli_distribution(lambda_)(loss) ? 1 : 0;
    return d;
}

Vec plant_step(const SystemModel& m, const Vec& x, const Vec& u, const Vec& w) {
    return m.A * x + m.B * u + m.D * w;
}

Vec measure(const SystemModel& m, const Vec& x, const Vec& v) { return m.C * x + v; }

LqgStep lqg_baseline_step(const SystemModel& m, const Mat& K, const LqgState& st, const Measurement& z) {
    LqgStep out;
    out.u = K * st.x_hat;
    const Mat CS = m.C * st.Sigma;
    const Mat S = CS * m.C.transpose() + m.Sigma_v;
    const Mat Mk = S.ldlt().solve(CS).transpose();  // Sigma C' S^-1
    Vec innov = Vec::Zero(m.ny());
    if (z.gamma != 0) {
        if (!z.y.has_value()) {
            throw MissingMeasurement("gamma = 1 but no measurement was supplied to the LQG baseline");
        }
        innov = *z.y - m.C * st.x_hat;
    }
    out.next.x_hat = m.A * st.x_hat + m.B * out.u + m.A * (Mk * innov);
    Mat next = m.A * st.Sigma * m.A.transpose() + m.D * m.Sigma_w * m.D.transpose();
    if (z.gamma != 0) {
        next -= m.A * Mk * CS * m.A.transpose();
    }
    out.next.Sigma = linalg::symmetrize(next);
    return out;
}

std::string to_string(ControllerKind k) { return k == ControllerKind::mpc ? "mpc" : "lqg"; }

ControllerKind parse_controller_kind(const std::string& s) {
    if (s == "mpc") {
        return ControllerKind::mpc;
    }
    if (s == "lqg" || s == "lqg_baseline") {
        return ControllerKind::lqg;
    }
    throw Error("unknown controller '" + s + "' (expected mpc or lqg)");
}

EpisodeResult run_episode(const SimConfig& cfg, const std::shared_ptr<const MpcDesign>& design, long episode,
                          bool record_trajectory) {
    const auto t0 = Clock::now();
    const SystemModel& m = cfg.model;
    const ControlSpec& s = cfg.spec;
    const NoiseSampler noise(m);
    const auto ep = static_cast<std::uint64_t>(episode);

    EpisodeResult r;
    r.episode = episode;
    r.steps = cfg.steps;
    Vec x = cfg.x0;
    double disc = 1.0;

    std::optional<MpcController> mpc;
    LqgState lqg{cfg.belief.x_hat0, cfg.belief.Sigma0};
    if (cfg.controller == ControllerKind::mpc) {
        mpc.emplace(design, cfg.belief);
    }

    for (long k = 0; k < cfg.steps; ++k) {
        StepLog log;
        log.k = k;
        log.x = x;
        if (mpc) {
            // Plan strictly before this step's noise is drawn.
            const Plan& p = mpc->plan();
            if (k == 0) {
                r.J0 = p.J;
            }
            log.x_hat = mpc->state().x_hat;
            log.mu = mpc->state().mu;
            r.min_mu = std::min(r.min_mu, log.mu);
        } else {
            log.x_hat = lqg.x_hat;
        }

        const NoiseDraw nd = noise.draw(cfg.seed, ep, static_cast<std::uint64_t>(k));
        const Vec y = measure(m, x, nd.v);
        Measurement z{nd.gamma, std::nullopt};
        if (nd.gamma != 0) {
            z.y = y;
        }

        Vec u;
        if (mpc) {
            const StepRecord rec = mpc->step(z);
            u = rec.u;
            log.J = rec.J;
            log.status = rec.fallback ? "fallback" : to_string(rec.status);
            if (k > 0 && rec.status == SolveStatus::infeasible) {
                ++r.infeasible_after_start;
            }
            if (rec.fallback) {
                ++r.fallbacks;
            }
            if (!rec.tail_feasible) {
                ++r.tail_rejections;
            }
        } else {
            const LqgStep st = lqg_baseline_step(m, design->gains().K, lqg, z);
            u = st.u;
            lqg = st.next;
            log.status = "lqg";
        }

        log.gamma = nd.gamma;
        log.u = u;
        log.y = z.y;
        log.stage_cost = x.dot(s.Q * x) + u.dot(s.R * u);
        log.stage_con = (s.H * x).squaredNorm();
        r.discounted_cost += disc * log.stage_cost;
        r.discounted_con += disc * log.stage_con;
        disc *= s.beta;
        if (record_trajectory) {
            r.trajectory.push_back(std::move(log));
        }
        x = plant_step(m, x, u, nd.w);
    }
    r.seconds = seconds_since(t0);
    return r;
}

void summarize(CampaignResult& r, const SimConfig& cfg) {
    CampaignSummary& s = r.summary;
    s.controller = cfg.controller;
    s.episodes = static_cast<long>(r.episodes.size());
    s.steps = cfg.steps;
    s.seed = cfg.seed;
    s.workers = cfg.workers;
    s.epsilon = cfg.spec.epsilon;
    const double n = static_cast<double>(r.episodes.size());
    double sc = 0.0, sc2 = 0.0, sj = 0.0, sj2 = 0.0, tsum = 0.0, tmax = 0.0;
    s.infeasible_after_start = s.fallbacks = s.tail_rejections = 0;
    for (const EpisodeResult& e : r.episodes) {
        sc += e.discounted_con;
        sc2 += e.discounted_con * e.discounted_con;
        sj += e.discounted_cost;
        sj2 += e.discounted_cost * e.discounted_cost;
        tsum += e.seconds;
        tmax = std::max(tmax, e.seconds);
        s.infeasible_after_start += e.infeasible_after_start;
        s.fallbacks += e.fallbacks;
        s.tail_rejections += e.tail_rejections;
    }
    s.con_mean = sc / n;
    s.cost_mean = sj / n;
    auto se = [n](double sum, double sum2) {
        if (n < 2.0) {
            return 0.0;
        }
        const double var = std::max(0.0, (sum2 - sum * sum / n) / (n - 1.0));
        return std::sqrt(var / n);
    };
    s.con_se = se(sc, sc2);
    s.cost_se = se(sj, sj2);
    s.violation = s.con_mean > s.epsilon;
    s.J0 = r.episodes.empty() ? std::numeric_limits<double>::quiet_NaN() : r.episodes.front().J0;
    s.mean_episode_seconds = n > 0 ? tsum / n : 0.0;
    s.max_episode_seconds = tmax;
}

CampaignResult run_campaign(const SimConfig& cfg, const std::shared_ptr<const MpcDesign>& design,
                            const std::function<void(long, long)>& progress) {
    if (cfg.episodes < 1 || cfg.steps < 1) {
        throw Error("campaign needs at least one episode and one step");
    }
    const auto t0 = Clock::now();
    CampaignResult out;
    out.episodes.resize(static_cast<std::size_t>(cfg.episodes));
    std::atomic<long> next{0};
    std::atomic<long> done{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex mtx;

    auto worker = [&] {
        for (;;) {
            const long e = next.fetch_add(1);
            if (e >= cfg.episodes || failed.load()) {
                return;
            }
            try {
                out.episodes[static_cast<std::size_t>(e)] = run_episode(cfg, design, e);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mtx);
                if (!error) {
                    error = std::current_exception();
                }
                failed = true;
                return;
            }
            const long d = done.fetch_add(1) + 1;
            if (progress) {
                std::lock_guard<std::mutex> lock(mtx);
                progress(d, cfg.episodes);
            }
        }
    };

    const int nworkers = static_cast<int>(std::max(1L, std::min<long>(cfg.workers, cfg.episodes)));
    if (nworkers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < nworkers; ++i) {
            pool.emplace_back(worker);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
    summarize(out, cfg);
    out.summary.wall_seconds = seconds_since(t0);
    return out;
}

OracleEstimate predicted_cost_oracle(const MpcDesign& design, const Policy& theta, const Vec& x_hat,
                                     const Mat& Sigma, long samples, long horizon_T, std::uint64_t seed) {
    const SystemModel& m = design.model();
    const ControlSpec& s = design.spec();
    const PolicyLayout& layout = design.layout();
    if (!(std::pow(s.beta, static_cast<double>(horizon_T)) < 1e-10)) {
        throw Error("oracle horizon too short: beta^T must be below 1e-10");
    }
    if (samples < 2) {
        throw Error("oracle needs at least two samples");
    }
    const int N = layout.N;
    const Mat& K = design.gains().K;
    const Mat AM = m.A * design.gains().M;
    const Mat Fs = linalg::psd_sqrt(Sigma);
    const Mat Fw = linalg::psd_sqrt(m.Sigma_w);
    const Mat Fv = linalg::psd_sqrt(m.Sigma_v);

    long steps = 0;
    for (double w = 1.0; steps < horizon_T && w >= 1e-17; w *= s.beta) {
        ++steps;
    }

    constexpr long kBatch = 4096;
    double sum_j = 0.0, sum_j2 = 0.0, sum_c = 0.0, sum_c2 = 0.0;
    const long nbatches = (samples + kBatch - 1) / kBatch;
    std::vector<Mat> innov(static_cast<std::size_t>(N));
    for (long b = 0; b < nbatches; ++b) {
        const long B = std::min(kBatch, samples - b * kBatch);
        const auto bid = static_cast<std::uint64_t>(b);
        Mat xi(Fs.cols(), B);
        fill_normal(xi, CounterRng(seed, bid, 0, 0));
        Mat X = (Fs * xi).colwise() + x_hat;
        Mat Xh = x_hat.replicate(1, B);
        Eigen::RowVectorXd J = Eigen::RowVectorXd::Zero(B);
        Eigen::RowVectorXd Cn = Eigen::RowVectorXd::Zero(B);
        Mat V(Fv.cols(), B), W(Fw.cols(), B);
        double disc = 1.0;
        for (long i = 0; i < steps; ++i) {
            const auto step = static_cast<std::uint64_t>(i + 1);
            fill_normal(V, CounterRng(seed, bid, step, std::uint64_t(NoiseChannel::measurement)));
            fill_normal(W, CounterRng(seed, bid, step, std::uint64_t(NoiseChannel::process)));
            CounterRng loss(seed, bid, step, std::uint64_t(NoiseChannel::loss));
            std::bernoulli_distribution arrive(m.lambda);
            Mat Z = m.C * (X - Xh) + Fv * V;
            for (long j = 0; j < B; ++j) {
                if (!arrive(loss)) {
                    Z.col(j).setZero();
                }
            }
            Mat U = K * Xh;
            if (i < N) {
                innov[static_cast<std::size_t>(i)] = Z;
                U.colwise() += theta.c_block(layout, static_cast<int>(i));
                for (int j = 0; j <= i; ++j) {
                    U.noalias() += theta.block(layout, static_cast<int>(i), j) * innov[static_cast<std::size_t>(j)];
                }
            }
            J += disc * ((X.array() * (s.Q * X).array()).colwise().sum() +
                         (U.array() * (s.R * U).array()).colwise().sum())
                            .matrix();
            Cn += disc * (s.H * X).array().square().colwise().sum().matrix();
            Xh = m.A * Xh + m.B * U + AM * Z;
            X = m.A * X + m.B * U + m.D * (Fw * W);
            disc *= s.beta;
        }
        sum_j += J.sum();
        sum_j2 += J.squaredNorm();
        sum_c += Cn.sum();
        sum_c2 += Cn.squaredNorm();
    }
    const double n = static_cast<double>(samples);
    OracleEstimate est;
    est.samples = samples;
    est.steps = steps;
    est.cost = sum_j / n;
    est.con = sum_c / n;
    est.cost_se = std::sqrt(std::max(0.0, (sum_j2 - sum_j * sum_j / n) / (n - 1.0)) / n);
    est.con_se = std::sqrt(std::max(0.0, (sum_c2 - sum_c * sum_c / n) / (n - 1.0)) / n);
    return est;
}

namespace {

void put_num(std::ostream& os, double v) {
    if (std::isfinite(v)) {
        os << v;
    }
}

void put_vec(std::ostream& os, const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        os << ',' << v(i);
    }
}

void put_header(std::ostream& os, const char* name, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
        os << ',' << name << i;
    }
}

}  // namespace

void write_step_csv(std::ostream& os, const std::vector<StepLog>& steps) {
    const Eigen::Index nu = steps.empty() ? 0 : steps.front().u.size();
    const Eigen::Index nx = steps.empty() ? 0 : steps.front().x.size();
    Eigen::Index ny = 0;
    for (const StepLog& s : steps) {
        if (s.y) {
            ny = s.y->size();
            break;
        }
    }
    os << std::setprecision(17);
    os << "k,gamma";
    put_header(os, "u", nu);
    put_header(os, "x", nx);
    put_header(os, "x_hat", nx);
    put_header(os, "y", ny);
    os << ",mu,stage_cost,stage_con,J_k,solver_status\n";
    for (const StepLog& s : steps) {
        os << s.k << ',' << s.gamma;
        put_vec(os, s.u);
        put_vec(os, s.x);
        put_vec(os, s.x_hat);
        for (Eigen::Index i = 0; i < ny; ++i) {
            os << ',';
            if (s.y) {
                os << (*s.y)(i);
            }
        }
        os << ',';
        put_num(os, s.mu);
        os << ',' << s.stage_cost << ',' << s.stage_con << ',';
        put_num(os, s.J);
        os << ',' << s.status << '\n';
    }
}

void write_episode_csv(std::ostream& os, const std::vector<EpisodeResult>& episodes) {
    os << std::setprecision(17);
    os << "episode,discounted_con,discounted_cost,J0,infeasible_after_start,fallbacks,tail_rejections,min_mu\n";
    for (const EpisodeResult& e : episodes) {
        os << e.episode << ',' << e.discounted_con << ',' << e.discounted_cost << ',';
        put_num(os, e.J0);
        os << ',' << e.infeasible_after_start << ',' << e.fallbacks << ',' << e.tail_rejections << ',';
        put_num(os, e.min_mu);
        os << '\n';
    }
}

std::string summary_json(const CampaignSummary& s) {
    nlohmann::json j;
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    j["controller"] = to_string(s.controller);
    j["episodes"] = s.episodes;
    j["steps"] = s.steps;
    j["seed"] = s.seed;
    j["workers"] = s.workers;
    j["discounted_constraint"] = {{"mean", s.con_mean}, {"se", s.con_se}};
    j["discounted_cost"] = {{"mean", s.cost_mean}, {"se", s.cost_se}};
    j["epsilon"] = s.epsilon;
    j["J0"] = num(s.J0);
    j["violation"] = s.violation;
    j["infeasible_after_start"] = s.infeasible_after_start;
    j["fallbacks"] = s.fallbacks;
    j["tail_rejections"] = s.tail_rejections;
    j["wall_clock"] = {{"total_seconds", s.wall_seconds},
                       {"mean_episode_seconds", s.mean_episode_seconds},
                       {"max_episode_seconds", s.max_episode_seconds}};
    return j.dump(2);
}

}  // namespace ofmpc
