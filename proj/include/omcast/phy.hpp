#pragma once

// MIMO-OFDM physical layer: synthetic frequency-selective channels, the linear
// multicast precoder, per-user mean capacity, the grouping norm metric and the
// MCS mapper.

#include "omcast/rng.hpp"
#include "omcast/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace omcast::phy {

using Complex = std::complex<double>;

struct Dimensions {
    std::size_t subcarriers = 52;
    std::size_t tx = 4;
    std::size_t rx = 1;
    std::size_t streams = 1;

    friend bool operator==(const Dimensions&, const Dimensions&) = default;
};

class DegenerateChannel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

/// Per-subcarrier N_r x N_t channel, row-major within a subcarrier.
class ChannelMatrix {
public:
    ChannelMatrix() = default;

    explicit ChannelMatrix(Dimensions dims, UserId user = 0, std::uint64_t epoch = 0)
        : dims_(dims), user_(user), epoch_(epoch), entries_(dims.subcarriers * dims.rx * dims.tx)
    {
    }

    /// Builds an N_r = 1 channel from one row vector per subcarrier.
    static ChannelMatrix miso(const std::vector<std::vector<Complex>>& rows, UserId user = 0)
    {
        if (rows.empty() || rows.front().empty()) {
            throw std::invalid_argument("miso channel needs at least one subcarrier and antenna");
        }
        ChannelMatrix h{Dimensions{rows.size(), rows.front().size(), 1, 1}, user};
        for (std::size_t n = 0; n < rows.size(); ++n) {
            if (rows[n].size() != h.dims_.tx) {
                throw std::invalid_argument("miso channel rows must share the antenna count");
            }
            std::copy(rows[n].begin(), rows[n].end(), h.entries_.begin() + static_cast<std::ptrdiff_t>(n * h.dims_.tx));
        }
        return h;
    }

    const Dimensions& dims() const noexcept { return dims_; }
    UserId user() const noexcept { return user_; }
    std::uint64_t epoch() const noexcept { return epoch_; }

    Complex& operator()(std::size_t n, std::size_t r, std::size_t t)
    {
        return entries_[(n * dims_.rx + r) * dims_.tx + t];
    }
    const Complex& operator()(std::size_t n, std::size_t r, std::size_t t) const
    {
        return entries_[(n * dims_.rx + r) * dims_.tx + t];
    }

    std::span<const Complex> subcarrier(std::size_t n) const
    {
        return {entries_.data() + n * dims_.rx * dims_.tx, dims_.rx * dims_.tx};
    }
    std::span<Complex> subcarrier(std::size_t n)
    {
        return {entries_.data() + n * dims_.rx * dims_.tx, dims_.rx * dims_.tx};
    }

    /// ||H_n||_F^2
    double norm_sq(std::size_t n) const
    {
        double s = 0.0;
        for (const auto& c : subcarrier(n)) {
            s += std::norm(c);
        }
        return s;
    }

    /// Mean over subcarriers of ||H_n||_F^2.
    double mean_norm_sq() const
    {
        double s = 0.0;
        for (std::size_t n = 0; n < dims_.subcarriers; ++n) {
            s += norm_sq(n);
        }
        return dims_.subcarriers == 0 ? 0.0 : s / static_cast<double>(dims_.subcarriers);
    }

private:
    Dimensions dims_{};
    UserId user_ = 0;
    std::uint64_t epoch_ = 0;
    std::vector<Complex> entries_;
};

/// Per-subcarrier N_t x N_s precoding matrices, row-major within a subcarrier.
class Precoder {
public:
    Precoder() = default;

    Precoder(std::size_t subcarriers, std::size_t tx, std::size_t streams)
        : subcarriers_(subcarriers), tx_(tx), streams_(streams), entries_(subcarriers * tx * streams),
          alpha_(subcarriers, 0.0)
    {
    }

    static Precoder miso(const std::vector<std::vector<Complex>>& columns)
    {
        if (columns.empty() || columns.front().empty()) {
            throw std::invalid_argument("precoder needs at least one subcarrier and antenna");
        }
        Precoder w{columns.size(), columns.front().size(), 1};
        for (std::size_t n = 0; n < columns.size(); ++n) {
            if (columns[n].size() != w.tx_) {
                throw std::invalid_argument("precoder columns must share the antenna count");
            }
            std::copy(columns[n].begin(), columns[n].end(), w.entries_.begin() + static_cast<std::ptrdiff_t>(n * w.tx_));
            w.alpha_[n] = 1.0;
        }
        return w;
    }

    std::size_t subcarriers() const noexcept { return subcarriers_; }
    std::size_t tx() const noexcept { return tx_; }
    std::size_t streams() const noexcept { return streams_; }

    Complex& operator()(std::size_t n, std::size_t t, std::size_t s)
    {
        return entries_[(n * tx_ + t) * streams_ + s];
    }
    const Complex& operator()(std::size_t n, std::size_t t, std::size_t s) const
    {
        return entries_[(n * tx_ + t) * streams_ + s];
    }

    double norm_sq(std::size_t n) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < tx_ * streams_; ++i) {
            s += std::norm(entries_[n * tx_ * streams_ + i]);
        }
        return s;
    }

    double max_norm_sq() const
    {
        double m = 0.0;
        for (std::size_t n = 0; n < subcarriers_; ++n) {
            m = std::max(m, norm_sq(n));
        }
        return m;
    }

    /// Normalization constant applied on subcarrier n (identical on every
    /// subcarrier under shared normalization).
    double alpha(std::size_t n = 0) const { return alpha_.at(n); }
    void set_alpha(std::size_t n, double a) { alpha_.at(n) = a; }

private:
    std::size_t subcarriers_ = 0;
    std::size_t tx_ = 0;
    std::size_t streams_ = 0;
    std::vector<Complex> entries_;
    std::vector<double> alpha_;
};

struct NoiseModel {
    double n0 = 1.0;

    friend bool operator==(const NoiseModel&, const NoiseModel&) = default;
};

/// Tapped-delay-line Rayleigh channel with an exponential power-delay profile,
/// evaluated on the data subcarriers of a power-of-two FFT grid. Block fading:
/// one independent realization per (seed, user, epoch).
class ChannelModel {
public:
    explicit ChannelModel(Dimensions dims = {}, std::size_t taps = 4, double decay_db = 3.0)
        : dims_(dims), taps_(taps), decay_db_(decay_db)
    {
        if (dims.subcarriers == 0 || dims.tx == 0 || dims.rx == 0 || dims.streams == 0) {
            throw std::invalid_argument("channel dimensions must be positive");
        }
        if (taps == 0) {
            throw std::invalid_argument("channel needs at least one tap");
        }
        double total = 0.0;
        tap_power_.resize(taps);
        for (std::size_t l = 0; l < taps; ++l) {
            tap_power_[l] = db_to_linear(-decay_db * static_cast<double>(l));
            total += tap_power_[l];
        }
        for (auto& p : tap_power_) {
            p /= total;
        }

        // Subcarrier k_n = n - N/2, skipping DC, on an FFT of size >= N + 1.
        const std::size_t fft = std::bit_ceil(dims.subcarriers + 1);
        twiddle_.resize(dims.subcarriers * taps);
        const auto half = static_cast<long>(dims.subcarriers / 2);
        for (std::size_t n = 0; n < dims.subcarriers; ++n) {
            long k = static_cast<long>(n) - half;
            if (k >= 0) {
                ++k;
            }
            for (std::size_t l = 0; l < taps; ++l) {
                const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(l)
                    / static_cast<double>(fft);
                twiddle_[n * taps + l] = std::polar(1.0, phase);
            }
        }
    }

    const Dimensions& dims() const noexcept { return dims_; }
    std::size_t taps() const noexcept { return taps_; }
    double tap_decay_db() const noexcept { return decay_db_; }

    /// Every entry has mean power `gain`.
    ChannelMatrix draw(UserId user, double gain, std::uint64_t seed, std::uint64_t epoch,
                       Stream stream = Stream::channel) const
    {
        auto eng = make_light_engine(seed, stream, user, epoch);
        std::normal_distribution<double> gauss{0.0, 1.0};
        ChannelMatrix h{dims_, user, epoch};
        std::vector<double> re(taps_);
        std::vector<double> im(taps_);
        for (std::size_t r = 0; r < dims_.rx; ++r) {
            for (std::size_t t = 0; t < dims_.tx; ++t) {
                for (std::size_t l = 0; l < taps_; ++l) {
                    const double sigma = std::sqrt(gain * tap_power_[l] / 2.0);
                    re[l] = sigma * gauss(eng);
                    im[l] = sigma * gauss(eng);
                }
                for (std::size_t n = 0; n < dims_.subcarriers; ++n) {
                    double acc_re = 0.0;
                    double acc_im = 0.0;
                    const Complex* tw = &twiddle_[n * taps_];
                    for (std::size_t l = 0; l < taps_; ++l) {
                        acc_re += re[l] * tw[l].real() - im[l] * tw[l].imag();
                        acc_im += re[l] * tw[l].imag() + im[l] * tw[l].real();
                    }
                    h(n, r, t) = Complex{acc_re, acc_im};
                }
            }
        }
        return h;
    }

private:
    Dimensions dims_;
    std::size_t taps_;
    double decay_db_;
    std::vector<double> tap_power_;
    std::vector<Complex> twiddle_;
};

inline ChannelMatrix draw_channel(const ChannelModel& model, UserId user, double snr_db, NoiseModel noise,
                                  std::uint64_t seed, std::uint64_t epoch)
{
    return model.draw(user, db_to_linear(snr_db) * noise.n0, seed, epoch);
}

enum class PowerNormalization {
    shared,         // one alpha for all subcarriers, the worst one tight
    per_subcarrier, // every subcarrier tight
};

/// W_n = alpha * sum_k H_{n,k}^H / ||H_{n,k}||_F^2 with U_{n,k} = I (N_s = N_r).
inline Precoder multicast_precoder(std::span<const ChannelMatrix* const> group,
                                   PowerNormalization norm = PowerNormalization::shared)
{
    if (group.empty() || group.size() > kMaxGroupSize) {
        throw std::invalid_argument("multicast group size must be in [1, 4]");
    }
    const Dimensions dims = group.front()->dims();
    if (dims.streams != dims.rx) {
        throw std::invalid_argument("precoder supports N_s == N_r only");
    }
    for (const auto* h : group) {
        if (!(h->dims() == dims)) {
            throw std::invalid_argument("channels in a group must share dimensions");
        }
    }

    Precoder w{dims.subcarriers, dims.tx, dims.streams};
    for (std::size_t n = 0; n < dims.subcarriers; ++n) {
        for (const auto* h : group) {
            const double nsq = h->norm_sq(n);
            if (!(nsq > 0.0)) {
                throw DegenerateChannel("zero-norm channel for user " + std::to_string(h->user()) + " on subcarrier "
                                        + std::to_string(n));
            }
            for (std::size_t t = 0; t < dims.tx; ++t) {
                for (std::size_t s = 0; s < dims.streams; ++s) {
                    w(n, t, s) += std::conj((*h)(n, s, t)) / nsq;
                }
            }
        }
    }

    auto scale = [&](std::size_t n, double a) {
        for (std::size_t t = 0; t < dims.tx; ++t) {
            for (std::size_t s = 0; s < dims.streams; ++s) {
                w(n, t, s) *= a;
            }
        }
        w.set_alpha(n, a);
    };

    if (norm == PowerNormalization::shared) {
        const double peak = std::sqrt(w.max_norm_sq());
        const double a = peak > 0.0 ? 1.0 / peak : 0.0;
        for (std::size_t n = 0; n < dims.subcarriers; ++n) {
            scale(n, a);
        }
    } else {
        for (std::size_t n = 0; n < dims.subcarriers; ++n) {
            const double f = std::sqrt(w.norm_sq(n));
            scale(n, f > 0.0 ? 1.0 / f : 0.0);
        }
    }
    return w;
}

inline Precoder multicast_precoder(std::span<const ChannelMatrix> group,
                                   PowerNormalization norm = PowerNormalization::shared)
{
    std::vector<const ChannelMatrix*> ptrs;
    ptrs.reserve(group.size());
    for (const auto& h : group) {
        ptrs.push_back(&h);
    }
    return multicast_precoder(std::span<const ChannelMatrix* const>{ptrs}, norm);
}

/// (1/N) sum_n log2 det(I + H_n W_n W_n^H H_n^H / N_0), in bits/s/Hz.
inline double user_rate(const ChannelMatrix& h, const Precoder& w, NoiseModel noise)
{
    const auto& d = h.dims();
    if (w.subcarriers() != d.subcarriers || w.tx() != d.tx) {
        throw std::invalid_argument("precoder and channel dimensions differ");
    }
    double acc = 0.0;
    if (d.rx == 1) {
        for (std::size_t n = 0; n < d.subcarriers; ++n) {
            double gain = 0.0;
            for (std::size_t s = 0; s < w.streams(); ++s) {
                Complex g{};
                for (std::size_t t = 0; t < d.tx; ++t) {
                    g += h(n, 0, t) * w(n, t, s);
                }
                gain += std::norm(g);
            }
            acc += std::log2(1.0 + gain / noise.n0);
        }
    } else {
        Eigen::MatrixXcd hn(d.rx, d.tx);
        Eigen::MatrixXcd wn(d.tx, w.streams());
        for (std::size_t n = 0; n < d.subcarriers; ++n) {
            for (std::size_t r = 0; r < d.rx; ++r) {
                for (std::size_t t = 0; t < d.tx; ++t) {
                    hn(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = h(n, r, t);
                }
            }
            for (std::size_t t = 0; t < d.tx; ++t) {
                for (std::size_t s = 0; s < w.streams(); ++s) {
                    wn(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(s)) = w(n, t, s);
                }
            }
            const Eigen::MatrixXcd g = hn * wn;
            const Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(g.rows(), g.rows()) + g * g.adjoint() / noise.n0;
            acc += std::log2(std::abs(m.determinant()));
        }
    }
    return std::max(0.0, acc / static_cast<double>(d.subcarriers));
}

/// Upper bound on user_rate over every precoder with ||W_n||_F^2 <= 1:
/// (1/N) sum_n N_r log2(1 + ||H_n||_F^2 / (N_r N_0)).
inline double rate_ceiling(const ChannelMatrix& h, NoiseModel noise)
{
    const auto& d = h.dims();
    const auto r = static_cast<double>(d.rx);
    double acc = 0.0;
    for (std::size_t n = 0; n < d.subcarriers; ++n) {
        acc += r * std::log2(1.0 + h.norm_sq(n) / (r * noise.n0));
    }
    return acc / static_cast<double>(d.subcarriers);
}

/// E_n ||H_{n,k} H_{n,s}^H||_F^2 over all subcarriers.
inline double grouping_metric(const ChannelMatrix& k, const ChannelMatrix& s)
{
    const auto& d = k.dims();
    if (!(d == s.dims())) {
        throw std::invalid_argument("grouping metric needs equal dimensions");
    }
    double acc = 0.0;
    for (std::size_t n = 0; n < d.subcarriers; ++n) {
        for (std::size_t i = 0; i < d.rx; ++i) {
            for (std::size_t j = 0; j < d.rx; ++j) {
                Complex c{};
                for (std::size_t t = 0; t < d.tx; ++t) {
                    c += k(n, i, t) * std::conj(s(n, j, t));
                }
                acc += std::norm(c);
            }
        }
    }
    return acc / static_cast<double>(d.subcarriers);
}

struct McsEntry {
    int index = 0;
    double efficiency = 0.0;          // bits/s/Hz carried by the MCS
    double required_snr_db = 0.0;     // gap-adjusted SNR needed to support it
    double rate_mbps = 0.0;           // PHY rate
    double required_efficiency = 0.0; // mean capacity needed, log2(1 + gap (2^eff - 1))
};

class McsTable {
public:
    static constexpr std::size_t kEntries = 8;

    McsTable() : McsTable(default_efficiency(), default_rates_mbps(), 3.0) {}

    McsTable(std::vector<double> efficiency, std::vector<double> rate_mbps, double gap_db) : gap_db_(gap_db)
    {
        if (efficiency.size() != kEntries || rate_mbps.size() != kEntries) {
            throw std::invalid_argument("MCS table must have exactly 8 entries");
        }
        if (!(gap_db >= 0.0)) {
            throw std::invalid_argument("Shannon gap must be nonnegative");
        }
        const double gap = db_to_linear(gap_db);
        for (std::size_t i = 0; i < kEntries; ++i) {
            if (!(efficiency[i] > 0.0) || !(rate_mbps[i] > 0.0)) {
                throw std::invalid_argument("MCS efficiency and rate must be positive");
            }
            McsEntry e;
            e.index = static_cast<int>(i);
            e.efficiency = efficiency[i];
            e.rate_mbps = rate_mbps[i];
            const double snr = gap * (std::exp2(efficiency[i]) - 1.0);
            e.required_snr_db = linear_to_db(snr);
            e.required_efficiency = std::log2(1.0 + snr);
            if (i > 0) {
                const auto& p = entries_.back();
                if (!(e.efficiency > p.efficiency) || !(e.rate_mbps > p.rate_mbps)
                    || !(e.required_snr_db > p.required_snr_db)) {
                    throw std::invalid_argument("MCS table must be strictly increasing");
                }
            }
            entries_.push_back(e);
        }
    }

    static std::vector<double> default_efficiency() { return {0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 4.5, 5.0}; }
    static std::vector<double> default_rates_mbps() { return {6.5, 13.0, 19.5, 26.0, 39.0, 52.0, 58.5, 65.0}; }

    std::size_t size() const noexcept { return entries_.size(); }
    const McsEntry& operator[](std::size_t i) const { return entries_.at(i); }
    const McsEntry& at(int i) const { return entries_.at(static_cast<std::size_t>(i)); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    double gap_db() const noexcept { return gap_db_; }

    double rate_bps(int i) const { return at(i).rate_mbps * 1e6; }

    /// Largest MCS whose required efficiency does not exceed `rate`.
    std::optional<int> best_for(double rate) const
    {
        std::optional<int> best;
        for (const auto& e : entries_) {
            if (e.required_efficiency <= rate) {
                best = e.index;
            }
        }
        return best;
    }

    friend bool operator==(const McsTable& a, const McsTable& b)
    {
        if (a.gap_db_ != b.gap_db_ || a.size() != b.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i].efficiency != b[i].efficiency || a[i].rate_mbps != b[i].rate_mbps) {
                return false;
            }
        }
        return true;
    }

private:
    double gap_db_ = 3.0;
    std::vector<McsEntry> entries_;
};

/// Minimum over users of each user's best MCS; nullopt when some user cannot
/// support even MCS 0 (no transmission).
inline std::optional<int> select_mcs(std::span<const double> rates, const McsTable& table)
{
    if (rates.empty()) {
        return std::nullopt;
    }
    std::optional<int> chosen;
    for (double r : rates) {
        const auto m = table.best_for(r);
        if (!m) {
            return std::nullopt;
        }
        chosen = chosen ? std::min(*chosen, *m) : *m;
    }
    return chosen;
}

/// Min-rate over a group under its multicast precoder; also returns the
/// precoder so callers can reuse it.
struct GroupRate {
    Precoder precoder;
    std::vector<double> rates;
    std::optional<int> mcs;
};

inline GroupRate evaluate_group(std::span<const ChannelMatrix* const> group, NoiseModel noise, const McsTable& table,
                                PowerNormalization norm = PowerNormalization::shared)
{
    GroupRate out;
    out.precoder = multicast_precoder(group, norm);
    out.rates.reserve(group.size());
    for (const auto* h : group) {
        out.rates.push_back(user_rate(*h, out.precoder, noise));
    }
    out.mcs = select_mcs(out.rates, table);
    return out;
}

} // namespace omcast::phy
