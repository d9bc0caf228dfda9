#include "core/boxsum.hpp"

#include "core/parallel.hpp"

#include <algorithm>

namespace groupreg {

namespace {

// One axis pass via per-line prefix sums; lines are independent.
void box_sum_axis(const GridInfo& g, const std::vector<double>& in,
                  std::vector<double>& out, int axis, int radius)
{
    const int n = g.dims[axis];
    const std::ptrdiff_t stride =
        axis == 0 ? 1
                  : (axis == 1 ? g.dims[0]
                               : static_cast<std::ptrdiff_t>(g.dims[0]) * g.dims[1]);
    const int nu = axis == 0 ? g.dims[1] : g.dims[0];
    const int nv = axis == 2 ? g.dims[1] : g.dims[2];
    const std::size_t lines = static_cast<std::size_t>(nu) * nv;

    parallel_for(lines, [&](std::size_t lb, std::size_t le) {
        std::vector<double> prefix(n + 1);
        for (std::size_t line = lb; line < le; ++line) {
            int u = static_cast<int>(line % nu);
            int v = static_cast<int>(line / nu);
            std::size_t base;
            if (axis == 0)
                base = g.index(0, u, v);
            else if (axis == 1)
                base = g.index(u, 0, v);
            else
                base = g.index(u, v, 0);
            prefix[0] = 0.0;
            for (int i = 0; i < n; ++i)
                prefix[i + 1] = prefix[i] + in[base + i * stride];
            for (int i = 0; i < n; ++i) {
                int lo = std::max(0, i - radius);
                int hi = std::min(n - 1, i + radius);
                out[base + i * stride] = prefix[hi + 1] - prefix[lo];
            }
        }
    });
}

} // namespace

std::vector<double> box_sum(const GridInfo& g, const std::vector<double>& in, int radius)
{
    std::vector<double> a(in.size()), b(in.size());
    box_sum_axis(g, in, a, 0, radius);
    box_sum_axis(g, a, b, 1, radius);
    box_sum_axis(g, b, a, 2, radius);
    return a;
}

int axis_window_count(int i, int n, int radius)
{
    return std::min(n - 1, i + radius) - std::max(0, i - radius) + 1;
}

double window_count(const GridInfo& g, std::size_t flat_index, int radius)
{
    const int nx = g.dims[0], ny = g.dims[1];
    int x = static_cast<int>(flat_index % nx);
    int y = static_cast<int>((flat_index / nx) % ny);
    int z = static_cast<int>(flat_index / (static_cast<std::size_t>(nx) * ny));
    return static_cast<double>(axis_window_count(x, nx, radius)) *
           axis_window_count(y, g.dims[1], radius) *
           axis_window_count(z, g.dims[2], radius);
}

} // namespace groupreg
