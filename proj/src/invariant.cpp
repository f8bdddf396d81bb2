#include "deffa/invariant.hpp"

#include <algorithm>

#include "deffa/errors.hpp"

namespace deffa {

namespace {

// Mirror index into [0, n) without repeating the edge sample.
int reflect(int i, int n)
{
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

std::vector<int> reflected_offsets(int n, int radius)
{
    // Row-major table: for each position p and offset k in [-r, r].
    const int span = 2 * radius + 1;
    std::vector<int> table(static_cast<size_t>(n) * span);
    for (int p = 0; p < n; ++p)
        for (int k = -radius; k <= radius; ++k) table[static_cast<size_t>(p) * span + k + radius] = reflect(p + k, n);
    return table;
}

}  // namespace

void InvariantConfig::validate() const
{
    if (window_size < 3 || window_size % 2 == 0)
        throw ValidationError("window_size must be odd and >= 3, got " + std::to_string(window_size));
    if (!(alpha_enh > 0.0)) throw ValidationError("alpha_enh must be positive");
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
}

GrayField local_average(const GrayField& field, const InvariantConfig& cfg)
{
    cfg.validate();
    const int h = field.height();
    const int w = field.width();
    const int r = cfg.window_size / 2;
    const int span = cfg.window_size;
    const auto cols = reflected_offsets(w, r);
    const auto rows = reflected_offsets(h, r);

    GrayField horizontal(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            const int* idx = &cols[static_cast<size_t>(x) * span];
            for (int k = 0; k < span; ++k) sum += field.at(y, idx[k]);
            horizontal.at(y, x) = sum;
        }
    }
    GrayField out(h, w);
    const double norm = 1.0 / (static_cast<double>(span) * span);
    for (int y = 0; y < h; ++y) {
        const int* idx = &rows[static_cast<size_t>(y) * span];
        for (int x = 0; x < w; ++x) {
            double sum = 0.0;
            for (int k = 0; k < span; ++k) sum += horizontal.at(idx[k], x);
            out.at(y, x) = sum * norm;
        }
    }
    return out;
}

GrayField high_frequency(const GrayField& field, const InvariantConfig& cfg)
{
    cfg.validate();
    const int h = field.height();
    const int w = field.width();
    const int r = cfg.window_size / 2;
    const int span = cfg.window_size;
    const auto cols = reflected_offsets(w, r);
    const auto rows = reflected_offsets(h, r);
    const double norm = 1.0 / (static_cast<double>(span) * span);

    GrayField out(h, w);
    for (int y = 0; y < h; ++y) {
        const int* ry = &rows[static_cast<size_t>(y) * span];
        for (int x = 0; x < w; ++x) {
            const int* rx = &cols[static_cast<size_t>(x) * span];
            const double centre = field.at(y, x);
            double sum = 0.0;
            for (int i = 0; i < span; ++i)
                for (int j = 0; j < span; ++j) sum += centre - field.at(ry[i], rx[j]);
            out.at(y, x) = sum * norm;
        }
    }
    return out;
}

double enhancement_factor(const GrayField& high, const InvariantConfig& cfg)
{
    cfg.validate();
    const auto px = high.pixels();
    if (px.empty()) return 0.0;
    const double n = static_cast<double>(px.size());
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double v : px) {
        sum += v;
        sum_sq += v * v;
    }
    const double mean = sum / n;
    double var = 0.0;
    for (double v : px) var += (v - mean) * (v - mean);
    var /= n;
    return cfg.alpha_enh * sum_sq / (n * (var + cfg.epsilon));
}

GrayField make_invariant_input(const ColorImage& image, const InvariantConfig& cfg)
{
    auto high = high_frequency(green_channel(image), cfg);
    const double gain = enhancement_factor(high, cfg);
    for (double& v : high.pixels()) v *= gain;
    if (!cfg.normalize_output) return high;

    auto [lo, hi] = std::minmax_element(high.pixels().begin(), high.pixels().end());
    const double min = lo == high.pixels().end() ? 0.0 : *lo;
    const double range = lo == high.pixels().end() ? 0.0 : *hi - *lo;
    for (double& v : high.pixels()) v = range > 0.0 ? (v - min) / range : 0.0;
    return high;
}

GrayField make_invariant_input(const FundusSample& sample, const InvariantConfig& cfg)
{
    return make_invariant_input(sample.image, cfg);
}

}  // namespace deffa
