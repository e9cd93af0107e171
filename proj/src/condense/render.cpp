// SPDX-License-Identifier: Apache-2.0
#include "gestigo/condense/render.hpp"

#include <cmath>
#include <exception>

#include <fmt/format.h>

#include "gestigo/error.hpp"

namespace gestigo::condense {

RenderConfig RenderConfig::for_size(int image_px) {
  RenderConfig cfg;
  cfg.image_px = image_px;
  const double s = static_cast<double>(image_px) / kDefaultImagePx;
  cfg.bone_width_px = 3.0 * s;
  cfg.marker_radius_px = 4.0 * s;
  return cfg;
}

void RenderConfig::validate() const {
  if (image_px <= 0) throw ArgumentError("render: image_px must be positive");
  if (!(bone_width_px > 0.0) || !(marker_radius_px > 0.0))
    throw ArgumentError("render: stroke sizes must be positive");
  if (!(alpha_min >= 0.0 && alpha_min < alpha_max && alpha_max <= 1.0))
    throw ArgumentError(fmt::format("render: need 0 <= alpha_min < alpha_max <= 1, got {} / {}",
                                    alpha_min, alpha_max));
  if (temporal_window < 2) throw ArgumentError("render: temporal window must be at least 2");
}

void render_spatial(std::span<const Vec3> frame, const dataset::JointSchema& schema,
                    const FitResult& fit, const ViewOrientation& vo, const RenderConfig& cfg,
                    RasterImage& canvas) {
  if (canvas.width() != cfg.image_px || canvas.height() != cfg.image_px)
    throw ShapeError("render_spatial: canvas does not match image_px");
  const Mat3 basis = camera_basis(vo);
  for (const auto& [a, b] : schema.bones) {
    const Pixel pa = project_point(frame[a], fit.target, basis, fit.zoom, cfg.image_px);
    const Pixel pb = project_point(frame[b], fit.target, basis, fit.zoom, cfg.image_px);
    draw_line(canvas, pa.x, pa.y, pb.x, pb.y, cfg.bone_width_px, schema.bone_color);
  }
}

double trail_alpha(std::size_t index, std::size_t count, const RenderConfig& cfg) {
  if (count <= 1) return cfg.alpha_min;
  return cfg.alpha_min + (cfg.alpha_max - cfg.alpha_min) * static_cast<double>(index) /
                             static_cast<double>(count - 1);
}

void render_temporal(std::span<const std::span<const Vec3>> frames,
                     const dataset::JointSchema& schema, const FitResult& fit,
                     const ViewOrientation& vo, const RenderConfig& cfg, RasterImage& canvas) {
  if (canvas.width() != cfg.image_px || canvas.height() != cfg.image_px)
    throw ShapeError("render_temporal: canvas does not match image_px");
  const Mat3 basis = camera_basis(vo);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const double alpha = trail_alpha(t, frames.size(), cfg);
    for (std::size_t f = 0; f < schema.fingertips.size(); ++f) {
      const Vec3& tip = frames[t][static_cast<std::size_t>(schema.fingertips[f])];
      const Pixel p = project_point(tip, fit.target, basis, fit.zoom, cfg.image_px);
      draw_disc(canvas, p.x, p.y, cfg.marker_radius_px, schema.fingertip_colors[f], alpha);
    }
  }
}

RasterImage condense(const SkeletonSequence& seq, const ViewOrientation& vo,
                     const RenderConfig& cfg, double padding, double canonical_length) {
  cfg.validate();
  const SkeletonSequence resampled = resample_sequence(seq, cfg.temporal_window);
  const FitResult fit = fit_sequence(resampled, canonical_length, padding);
  RasterImage canvas(cfg.image_px, cfg.image_px, cfg.background);

  const std::size_t frames = fit.centered.frame_count();
  std::vector<std::span<const Vec3>> trail;
  trail.reserve(frames - 1);
  for (std::size_t t = 0; t + 1 < frames; ++t) trail.push_back(fit.centered.frame(t));
  render_temporal(trail, seq.schema(), fit, vo, cfg, canvas);
  render_spatial(fit.centered.frame(frames - 1), seq.schema(), fit, vo, cfg, canvas);
  return canvas;
}

std::vector<RasterImage> condense_batch(std::span<const SkeletonSequence> seqs,
                                        std::span<const ViewOrientation> views,
                                        const RenderConfig& cfg, double padding,
                                        double canonical_length) {
  std::vector<RasterImage> out(seqs.size() * views.size());
  std::exception_ptr failure;
  const auto n = static_cast<std::ptrdiff_t>(seqs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      for (std::size_t v = 0; v < views.size(); ++v)
        out[static_cast<std::size_t>(i) * views.size() + v] =
            condense(seqs[static_cast<std::size_t>(i)], views[v], cfg, padding, canonical_length);
    } catch (...) {
#pragma omp critical(gestigo_condense_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<RasterImage> condense_batch_serial(std::span<const SkeletonSequence> seqs,
                                               std::span<const ViewOrientation> views,
                                               const RenderConfig& cfg, double padding,
                                               double canonical_length) {
  std::vector<RasterImage> out;
  out.reserve(seqs.size() * views.size());
  for (const auto& seq : seqs)
    for (const auto& vo : views) out.push_back(condense(seq, vo, cfg, padding, canonical_length));
  return out;
}

}  // namespace gestigo::condense
