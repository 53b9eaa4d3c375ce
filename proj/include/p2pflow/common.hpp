#pragma once

#include <complex>
#include <stdexcept>
#include <string>

namespace p2pflow {

using Complex = std::complex<double>;

/// Error with a pipeline-stage tag, e.g. "netmodel", "powerflow", "session/orders".
class Error : public std::runtime_error {
public:
    Error(std::string stage, const std::string& what)
        : std::runtime_error("[" + stage + "] " + what), stage_(std::move(stage)) {}

    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

enum class Phase : int { a = 0, b = 1, c = 2 };

inline char phase_letter(Phase p) { return "abc"[static_cast<int>(p)]; }

inline Phase phase_from_letter(char c) {
    switch (c) {
    case 'a': case 'A': return Phase::a;
    case 'b': case 'B': return Phase::b;
    case 'c': case 'C': return Phase::c;
    default: throw Error("common", std::string("unknown phase '") + c + "'");
    }
}

/// Execution policy for the data-parallel kernels. The serial path is the
/// reference implementation; OpenMP must produce bit-identical results.
enum class Exec { serial, openmp };

} // namespace p2pflow
