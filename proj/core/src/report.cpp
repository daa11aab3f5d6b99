#include "emgssi/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace emgssi::report {

namespace {

// Perceptually ordered blue -> yellow ramp, t in [0, 1].
std::string ramp(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0);
  static constexpr double stops[5][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  const double x = t * 4.0;
  const int i = std::min(3, static_cast<int>(x));
  const double f = x - i;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

const char* kPalette[kNumClasses] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                     "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

const char* source_name(traineval::EmbeddingSource s) {
  return s == traineval::EmbeddingSource::raw_input ? "raw_input" : "deep_feature";
}

}  // namespace

std::string fmt(double v, int precision) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string metrics_csv(const std::vector<traineval::EpochRecord>& history) {
  std::string out = "epoch,loss,train_accuracy,val_accuracy\n";
  for (const auto& r : history)
    out += std::to_string(r.epoch) + "," + fmt(r.loss) + "," + fmt(r.train_accuracy) + "," +
           fmt(r.val_accuracy) + "\n";
  return out;
}

std::string confusion_csv(const traineval::ConfusionMatrix& cm) {
  std::string out = "true\\predicted";
  for (int k = 1; k <= static_cast<int>(kNumClasses); ++k) {
    out += ",";
    out += word_for(k);
  }
  out += "\n";
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    out += word_for(static_cast<int>(r) + 1);
    for (std::size_t c = 0; c < kNumClasses; ++c) out += "," + std::to_string(cm.counts[r][c]);
    out += "\n";
  }
  return out;
}

std::string ablation_csv(const traineval::AblationReport& report) {
  std::string out = "arm,filter,channels,accuracy,init_checksum,data_order_checksum\n";
  for (const auto& a : report.arms) {
    std::string ch;
    for (std::size_t c = 0; c < kChannels; ++c)
      if (a.flags.channel_mask[c]) ch += std::to_string(c + 1);
    char ck[2][24];
    std::snprintf(ck[0], sizeof ck[0], "%016llx", static_cast<unsigned long long>(a.init_checksum));
    std::snprintf(ck[1], sizeof ck[1], "%016llx", static_cast<unsigned long long>(a.data_order_checksum));
    out += a.name + "," + (a.flags.filter_on ? "on" : "off") + "," + ch + "," + fmt(a.accuracy) + "," +
           ck[0] + "," + ck[1] + "\n";
  }
  return out;
}

std::string embedding_csv(const traineval::EmbeddingResult& e) {
  std::string out = "x,y,label,word,source\n";
  for (std::size_t i = 0; i < e.points.size(); ++i)
    out += fmt(e.points[i][0]) + "," + fmt(e.points[i][1]) + "," + std::to_string(e.labels[i]) + "," +
           std::string(word_for(e.labels[i])) + "," + source_name(e.source) + "\n";
  return out;
}

std::string scalogram_csv(const dsp::Scalogram& s) {
  std::string out = "freq_hz";
  for (double t : s.times_s) out += "," + fmt(t, 3);
  out += "\n";
  for (std::size_t f = 0; f < s.n_freqs(); ++f) {
    out += fmt(s.freqs_hz[f], 3);
    for (std::size_t t = 0; t < s.n_times(); ++t) out += "," + fmt(s.at(f, t), 6);
    out += "\n";
  }
  return out;
}

std::string confusion_svg(const traineval::ConfusionMatrix& cm) {
  const int cell = 40, left = 80, top = 30;
  const int size = left + cell * kNumClasses + 20;
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size + 40
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<text x=\"" << left << "\" y=\"18\">confusion (rows: true, columns: predicted)</text>\n";
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    const double rs = static_cast<double>(cm.row_sum(r));
    o << "<text x=\"" << left - 6 << "\" y=\"" << top + cell * r + cell / 2 + 4
      << "\" text-anchor=\"end\">" << word_for(static_cast<int>(r) + 1) << "</text>\n";
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      const double frac = rs > 0 ? cm.counts[r][c] / rs : 0.0;
      o << "<rect x=\"" << left + cell * c << "\" y=\"" << top + cell * r << "\" width=\"" << cell
        << "\" height=\"" << cell << "\" fill=\"" << ramp(frac) << "\"/>";
      o << "<text x=\"" << left + cell * c + cell / 2 << "\" y=\"" << top + cell * r + cell / 2 + 4
        << "\" text-anchor=\"middle\" fill=\"" << (frac > 0.6 ? "black" : "white") << "\">"
        << cm.counts[r][c] << "</text>\n";
    }
  }
  for (std::size_t c = 0; c < kNumClasses; ++c)
    o << "<text transform=\"translate(" << left + cell * c + cell / 2 << "," << top + cell * kNumClasses + 8
      << ") rotate(45)\">" << word_for(static_cast<int>(c) + 1) << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

std::string embedding_svg(const traineval::EmbeddingResult& e, const std::string& title) {
  const double w = 520, h = 520, pad = 30;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (!e.points.empty()) {
    xmin = xmax = e.points[0][0];
    ymin = ymax = e.points[0][1];
    for (const auto& p : e.points) {
      xmin = std::min(xmin, p[0]);
      xmax = std::max(xmax, p[0]);
      ymin = std::min(ymin, p[1]);
      ymax = std::max(ymax, p[1]);
    }
  }
  const double sx = (w - 2 * pad - 100) / std::max(xmax - xmin, 1e-12);
  const double sy = (h - 2 * pad) / std::max(ymax - ymin, 1e-12);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<text x=\"" << pad << "\" y=\"18\">" << title << "</text>\n";
  for (std::size_t i = 0; i < e.points.size(); ++i) {
    const int l = std::clamp(e.labels[i], 1, static_cast<int>(kNumClasses));
    o << "<circle cx=\"" << fmt(pad + (e.points[i][0] - xmin) * sx, 2) << "\" cy=\""
      << fmt(h - pad - (e.points[i][1] - ymin) * sy, 2) << "\" r=\"3\" fill=\"" << kPalette[l - 1]
      << "\"/>\n";
  }
  for (int k = 1; k <= static_cast<int>(kNumClasses); ++k) {
    const double ly = pad + 16 * k;
    o << "<circle cx=\"" << w - 90 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"" << kPalette[k - 1]
      << "\"/><text x=\"" << w - 80 << "\" y=\"" << ly << "\">" << word_for(k) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string scalogram_svg(const dsp::Scalogram& s, const std::string& title) {
  const std::size_t nf = s.n_freqs(), nt = s.n_times();
  const std::size_t cols = std::min<std::size_t>(nt, 600);
  const double cw = 600.0 / static_cast<double>(std::max<std::size_t>(cols, 1));
  const double ch = 300.0 / static_cast<double>(std::max<std::size_t>(nf, 1));
  double vmax = 0.0;
  for (double v : s.magnitudes) vmax = std::max(vmax, v);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"700\" height=\"360\" "
       "font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<text x=\"60\" y=\"18\">" << title << "</text>\n";
  for (std::size_t f = 0; f < nf; ++f) {
    // Row 0 is the lowest frequency, drawn at the bottom.
    const double y = 30 + (nf - 1 - f) * ch;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t t0 = c * nt / cols, t1 = std::max(t0 + 1, (c + 1) * nt / cols);
      double m = 0.0;
      for (std::size_t t = t0; t < t1; ++t) m = std::max(m, s.at(f, t));
      o << "<rect x=\"" << fmt(60 + c * cw, 2) << "\" y=\"" << fmt(y, 2) << "\" width=\"" << fmt(cw + 0.05, 2)
        << "\" height=\"" << fmt(ch + 0.05, 2) << "\" fill=\"" << ramp(vmax > 0 ? m / vmax : 0.0) << "\"/>\n";
    }
  }
  if (nf > 0) {
    o << "<text x=\"55\" y=\"" << 30 + 10 << "\" text-anchor=\"end\">" << fmt(s.freqs_hz.back(), 0)
      << " Hz</text>\n";
    o << "<text x=\"55\" y=\"" << 330 << "\" text-anchor=\"end\">" << fmt(s.freqs_hz.front(), 0)
      << " Hz</text>\n";
  }
  if (nt > 0)
    o << "<text x=\"660\" y=\"345\" text-anchor=\"end\">" << fmt(s.times_s.back(), 2) << " s</text>\n";
  o << "</svg>\n";
  return o.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write failed: " + path);
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace emgssi::report
