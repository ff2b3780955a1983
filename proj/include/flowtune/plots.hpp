#pragma once

#include <string>
#include <vector>

#include "flowtune/harness.hpp"

namespace flowtune {

enum class ChartKind { Throughput, Streams, Loss };

// Standalone SVG line charts from a trace: one file per requested kind, one
// series per transfer (the loss chart plots the link-level loss). Returns the
// files written; an empty trace writes nothing and warns on stderr.
std::vector<std::string> emit_plots(const std::vector<TraceRow>& trace,
                                    const std::string& out_dir,
                                    const std::vector<ChartKind>& kinds = {
                                        ChartKind::Throughput, ChartKind::Streams,
                                        ChartKind::Loss});

}  // namespace flowtune
