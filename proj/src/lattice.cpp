#include "ddec/lattice.hpp"

#include <queue>
#include <stdexcept>
#include <tuple>

namespace ddec {

namespace {

struct HeapEntry {
    double tau;
    std::vector<int> idx;
    int last_j;  // children may only increment delays >= last_j (avoids permutation duplicates)
    bool operator>(const HeapEntry& o) const { return tau > o.tau; }
};

}  // namespace

std::vector<LatticePoint> lattice_points(const std::vector<double>& delays, double T,
                                         double merge_tol, int max_atoms) {
    if (T < 0.0) throw std::invalid_argument("lattice_points: T must be >= 0");
    if (merge_tol < 0.0) merge_tol = default_merge_tol(T);
    const int N = static_cast<int>(delays.size());

    std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> heap;
    heap.push({0.0, std::vector<int>(N, 0), 0});

    std::vector<LatticePoint> out;
    while (!heap.empty()) {
        HeapEntry e = heap.top();
        heap.pop();
        if (e.tau > T + merge_tol) break;

        if (!out.empty() && e.tau - out.back().tau <= merge_tol) {
            out.back().multi_indices.push_back(e.idx);
        } else {
            if (static_cast<int>(out.size()) >= max_atoms)
                throw std::runtime_error(
                    "lattice_points: atom count exceeds max_atoms (incommensurate delays "
                    "generate combinatorially many lattice points; raise --max-atoms or "
                    "shorten the horizon)");
            out.push_back({e.tau, {e.idx}});
        }

        for (int j = e.last_j; j < N; ++j) {
            double tau = e.tau + delays[j];
            if (tau > T + merge_tol) continue;
            HeapEntry child{tau, e.idx, j};
            child.idx[j] += 1;
            heap.push(std::move(child));
        }
    }
    return out;
}

}  // namespace ddec
