#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <stdexcept>
#include <vector>

namespace d2dcoop {

inline constexpr int kUnmatched = -1;

/// M x N grid of coalition values v_mn = w_n u_mn. Row m is a CU, column n a
/// D2D pair; column n is the value vector of D2D pair n. Negative entries
/// mark unacceptable pairs.
class PayoffMatrix {
public:
    PayoffMatrix() = default;

    PayoffMatrix(std::size_t cu_count, std::size_t d2d_count, double fill = 0.0)
        : cu_count_(cu_count)
        , d2d_count_(d2d_count)
        , values_(cu_count * d2d_count, fill)
        , weights_(d2d_count, 1.0)
    {
        if (cu_count == 0 || d2d_count == 0) {
            throw std::invalid_argument("PayoffMatrix: dimensions must be >= 1");
        }
    }

    PayoffMatrix(std::initializer_list<std::initializer_list<double>> rows)
    {
        if (rows.size() == 0 || rows.begin()->size() == 0) {
            throw std::invalid_argument("PayoffMatrix: dimensions must be >= 1");
        }
        cu_count_ = rows.size();
        d2d_count_ = rows.begin()->size();
        values_.reserve(cu_count_ * d2d_count_);
        for (const auto& row : rows) {
            if (row.size() != d2d_count_) {
                throw std::invalid_argument("PayoffMatrix: ragged rows");
            }
            values_.insert(values_.end(), row.begin(), row.end());
        }
        weights_.assign(d2d_count_, 1.0);
        check_finite();
    }

    std::size_t cu_count() const { return cu_count_; }
    std::size_t d2d_count() const { return d2d_count_; }

    double operator()(std::size_t m, std::size_t n) const { return values_[m * d2d_count_ + n]; }
    double& operator()(std::size_t m, std::size_t n) { return values_[m * d2d_count_ + n]; }

    const std::vector<double>& weights() const { return weights_; }
    void set_weights(std::vector<double> w)
    {
        if (w.size() != d2d_count_) {
            throw std::invalid_argument("PayoffMatrix: one weight per D2D pair required");
        }
        weights_ = std::move(w);
    }

    /// Value vector of D2D pair n, (v_1n, ..., v_Mn).
    std::vector<double> value_vector(std::size_t n) const
    {
        std::vector<double> out(cu_count_);
        for (std::size_t m = 0; m < cu_count_; ++m) {
            out[m] = (*this)(m, n);
        }
        return out;
    }

    void set_value_vector(std::size_t n, const std::vector<double>& column)
    {
        if (column.size() != cu_count_) {
            throw std::invalid_argument("PayoffMatrix: value vector length must equal CU count");
        }
        for (std::size_t m = 0; m < cu_count_; ++m) {
            (*this)(m, n) = column[m];
        }
    }

    double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

    void check_finite() const
    {
        for (double v : values_) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("PayoffMatrix: entries must be finite");
            }
        }
    }

private:
    std::size_t cu_count_ = 0;
    std::size_t d2d_count_ = 0;
    std::vector<double> values_;
    std::vector<double> weights_;
};

/// One-to-one partial pairing plus CU prices. Prices are stored as integer
/// multiples of the price step so that they never accumulate rounding.
struct Matching {
    std::vector<int> cu_partner;           // D2D index or kUnmatched
    std::vector<int> d2d_partner;          // CU index or kUnmatched
    std::vector<std::int64_t> price_ticks; // p_m / eps
    double eps = 1.0;

    static Matching empty(std::size_t cu_count, std::size_t d2d_count, double eps = 1.0)
    {
        Matching m;
        m.cu_partner.assign(cu_count, kUnmatched);
        m.d2d_partner.assign(d2d_count, kUnmatched);
        m.price_ticks.assign(cu_count, 0);
        m.eps = eps;
        return m;
    }

    std::size_t cu_count() const { return cu_partner.size(); }
    std::size_t d2d_count() const { return d2d_partner.size(); }

    double price(std::size_t m) const { return static_cast<double>(price_ticks[m]) * eps; }

    void pair(std::size_t m, std::size_t n)
    {
        unpair_cu(m);
        unpair_d2d(n);
        cu_partner[m] = static_cast<int>(n);
        d2d_partner[n] = static_cast<int>(m);
    }

    void unpair_cu(std::size_t m)
    {
        if (cu_partner[m] != kUnmatched) {
            d2d_partner[static_cast<std::size_t>(cu_partner[m])] = kUnmatched;
            cu_partner[m] = kUnmatched;
        }
    }

    void unpair_d2d(std::size_t n)
    {
        if (d2d_partner[n] != kUnmatched) {
            cu_partner[static_cast<std::size_t>(d2d_partner[n])] = kUnmatched;
            d2d_partner[n] = kUnmatched;
        }
    }

    std::size_t matched_count() const
    {
        return static_cast<std::size_t>(
            std::count_if(cu_partner.begin(), cu_partner.end(), [](int n) { return n != kUnmatched; }));
    }

    /// mu(m) = n <=> mu(n) = m, prices >= 0 and zero for unmatched CUs.
    bool consistent() const
    {
        if (price_ticks.size() != cu_partner.size()) {
            return false;
        }
        for (std::size_t m = 0; m < cu_partner.size(); ++m) {
            const int n = cu_partner[m];
            if (price_ticks[m] < 0) {
                return false;
            }
            if (n == kUnmatched) {
                if (price_ticks[m] != 0) {
                    return false;
                }
                continue;
            }
            if (n < 0 || static_cast<std::size_t>(n) >= d2d_partner.size() ||
                d2d_partner[static_cast<std::size_t>(n)] != static_cast<int>(m)) {
                return false;
            }
        }
        for (std::size_t n = 0; n < d2d_partner.size(); ++n) {
            const int m = d2d_partner[n];
            if (m != kUnmatched &&
                (m < 0 || static_cast<std::size_t>(m) >= cu_partner.size() ||
                 cu_partner[static_cast<std::size_t>(m)] != static_cast<int>(n))) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const Matching&, const Matching&) = default;
};

/// theta_m = p_m.
inline double cu_utility(const Matching& mu, std::size_t m)
{
    return mu.price(m);
}

/// delta_n = v_{mu(n) n} - p_{mu(n)}, zero when unmatched.
inline double d2d_utility(const PayoffMatrix& values, const Matching& mu, std::size_t n)
{
    const int m = mu.d2d_partner[n];
    if (m == kUnmatched) {
        return 0.0;
    }
    const auto mi = static_cast<std::size_t>(m);
    return values(mi, n) - mu.price(mi);
}

/// Sum of v_mn over matched pairs.
inline double assignment_value(const PayoffMatrix& values, const Matching& mu)
{
    double acc = 0.0;
    for (std::size_t m = 0; m < mu.cu_count(); ++m) {
        if (mu.cu_partner[m] != kUnmatched) {
            acc += values(m, static_cast<std::size_t>(mu.cu_partner[m]));
        }
    }
    return acc;
}

} // namespace d2dcoop
