#pragma once

namespace aid_dti {

/// Execution policy for the data-parallel kernels.
///
/// Every kernel taking an `Exec` runs the same loop body either way; the
/// parallel variant only distributes independent iterations over OpenMP
/// threads, so both policies produce bitwise-identical results. The serial
/// variant is the reference used by the tests and the benchmark.
enum class Exec { serial, parallel };

} // namespace aid_dti
