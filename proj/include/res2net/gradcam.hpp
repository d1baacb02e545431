#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "res2net/network.hpp"

namespace res2net {

// Bilinear resampling to (out_h, out_w), half-pixel-center convention.
inline Tensor<float> bilinear_upsample(const Tensor<float>& x, int out_h,
                                       int out_w) {
  const Shape4 s = x.shape();
  Tensor<float> out(Shape4{s.n, s.c, out_h, out_w});
  const float sh = static_cast<float>(s.h) / static_cast<float>(out_h);
  const float sw = static_cast<float>(s.w) / static_cast<float>(out_w);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (int oh = 0; oh < out_h; ++oh) {
        float fy = (static_cast<float>(oh) + 0.5f) * sh - 0.5f;
        fy = std::clamp(fy, 0.0f, static_cast<float>(s.h - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, s.h - 1);
        const float wy = fy - static_cast<float>(y0);
        for (int ow = 0; ow < out_w; ++ow) {
          float fx = (static_cast<float>(ow) + 0.5f) * sw - 0.5f;
          fx = std::clamp(fx, 0.0f, static_cast<float>(s.w - 1));
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, s.w - 1);
          const float wx = fx - static_cast<float>(x0);
          const float v00 = x.at(n, c, y0, x0);
          const float v01 = x.at(n, c, y0, x1);
          const float v10 = x.at(n, c, y1, x0);
          const float v11 = x.at(n, c, y1, x1);
          out.at(n, c, oh, ow) = v00 * (1 - wy) * (1 - wx) +
                                 v01 * (1 - wy) * wx + v10 * wy * (1 - wx) +
                                 v11 * wy * wx;
        }
      }
    }
  }
  return out;
}

struct GradCamResult {
  Tensor<float> map;        // (1,1,h,w) at the target layer, values in [0,1]
  Tensor<float> upsampled;  // (1,1,H,W) at input resolution
};

// Grad-CAM: alpha_k = spatial mean of d(logit_class)/dA_k at the target
// layer, map = relu(sum_k alpha_k A_k), then min-max normalized. The map is
// all-zero only when its pre-normalization maximum is zero.
inline GradCamResult grad_cam(const NetworkSpec& spec,
                              const ParamStore<float>& params,
                              const Tensor<float>& image, int class_id,
                              const std::string& target_layer) {
  const Shape4 is = image.shape();
  if (is.n != 1 || is.c != spec.in_channels) {
    throw ShapeMismatch("grad_cam expects a single image (1," +
                        std::to_string(spec.in_channels) + ",H,W), got " +
                        is.str());
  }
  if (class_id < 0 || class_id >= spec.classes) {
    throw ShapeMismatch("class id " + std::to_string(class_id) +
                        " out of range");
  }
  Tape<float> tape;
  SlotMap slots = bind_leaves(tape, params);
  const int x = tape.leaf(image);
  auto fwd = network_forward(tape, x, spec, slots, params, BnMode::eval);
  const int target = fwd.activations.find(target_layer);
  const int loss = tape.select(fwd.logits, 0, class_id, 0, 0);
  tape.backward(loss);

  const Tensor<float>& act = tape.value(target);
  const Tensor<float>& grad = tape.grad(target);
  const Shape4 as = act.shape();
  const std::size_t plane = static_cast<std::size_t>(as.h) * as.w;

  GradCamResult result;
  result.map = Tensor<float>(Shape4{1, 1, as.h, as.w});
  for (int k = 0; k < as.c; ++k) {
    const float* pa = act.data() + static_cast<std::size_t>(k) * plane;
    const float* pg = grad.data() + static_cast<std::size_t>(k) * plane;
    double alpha = 0.0;
    for (std::size_t i = 0; i < plane; ++i) alpha += pg[i];
    alpha /= static_cast<double>(plane);
    float* pm = result.map.data();
    for (std::size_t i = 0; i < plane; ++i) {
      pm[i] += static_cast<float>(alpha) * pa[i];
    }
  }
  float mx = 0.0f;
  float mn = std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < result.map.numel(); ++i) {
    result.map[i] = std::max(0.0f, result.map[i]);
    mx = std::max(mx, result.map[i]);
    mn = std::min(mn, result.map[i]);
  }
  if (mx > 0.0f) {
    const float span = mx - mn;
    for (std::size_t i = 0; i < result.map.numel(); ++i) {
      result.map[i] = span > 0.0f ? (result.map[i] - mn) / span : 1.0f;
    }
  }
  result.upsampled = bilinear_upsample(result.map, is.h, is.w);
  return result;
}

// 8-bit binary PGM (P5).
inline void write_pgm(const Tensor<float>& map01, const std::string& path) {
  const Shape4 s = map01.shape();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "P5\n" << s.w << " " << s.h << "\n255\n";
  for (int h = 0; h < s.h; ++h) {
    for (int w = 0; w < s.w; ++w) {
      const float v = std::clamp(map01.at(0, 0, h, w), 0.0f, 1.0f);
      os.put(static_cast<char>(
          static_cast<unsigned char>(std::lround(v * 255.0f))));
    }
  }
  if (!os) throw IoError("write failure: " + path);
}

// 24-bit binary PPM (P6) reader for CLI image input; values scaled to [0,1].
inline Tensor<float> read_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw BadMagic("not a P6 PPM file: " + path);
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w <= 0 || h <= 0 || maxval != 255) {
    throw IoError("unsupported PPM header in " + path);
  }
  is.get();  // the single whitespace after the header
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * 3);
  if (!is.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size()))) {
    throw TruncatedFile("short PPM payload in " + path);
  }
  Tensor<float> img(Shape4{1, 3, h, w});
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        img.at(0, c, y, x) =
            static_cast<float>(raw[(static_cast<std::size_t>(y) * w + x) * 3 + c]) /
            255.0f;
      }
    }
  }
  return img;
}

// Writes an image tensor (1,3,H,W), values in [0,1], as P6 PPM.
inline void write_ppm(const Tensor<float>& img, const std::string& path) {
  const Shape4 s = img.shape();
  if (s.n != 1 || s.c != 3) {
    throw ShapeMismatch("write_ppm expects (1,3,H,W), got " + s.str());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << "P6\n" << s.w << " " << s.h << "\n255\n";
  for (int h = 0; h < s.h; ++h) {
    for (int w = 0; w < s.w; ++w) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(0, c, h, w), 0.0f, 1.0f);
        os.put(static_cast<char>(
            static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
    }
  }
  if (!os) throw IoError("write failure: " + path);
}

}  // namespace res2net
