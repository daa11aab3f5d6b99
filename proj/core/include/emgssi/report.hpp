#pragma once

#include "emgssi/dsp.hpp"
#include "emgssi/traineval.hpp"
#include "emgssi/tsne.hpp"

#include <string>
#include <vector>

namespace emgssi::report {

std::string metrics_csv(const std::vector<traineval::EpochRecord>& history);
std::string confusion_csv(const traineval::ConfusionMatrix& cm);
std::string ablation_csv(const traineval::AblationReport& report);
std::string embedding_csv(const traineval::EmbeddingResult& embedding);
std::string scalogram_csv(const dsp::Scalogram& scalogram);

// Row-normalized confusion heatmap with word labels.
std::string confusion_svg(const traineval::ConfusionMatrix& cm);
std::string embedding_svg(const traineval::EmbeddingResult& embedding, const std::string& title);
// Log-frequency vertical axis, linear time horizontal.
std::string scalogram_svg(const dsp::Scalogram& scalogram, const std::string& title);

// Writes via a temporary and renames so a failed write leaves nothing behind.
void write_text_file(const std::string& path, const std::string& content);

// Fixed-format number used by every CSV writer.
std::string fmt(double v, int precision = 6);

}  // namespace emgssi::report
