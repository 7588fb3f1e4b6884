// Copyright 2026 The MIRL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mirl/tokenizer/image.hpp"

namespace mirl {

/// Writes image `b` of the batch as binary PPM (3 channels) or PGM (1 channel).
inline void write_pnm(const std::string& path, const ImageBatch& img, std::size_t b = 0) {
  if (img.channels != 1 && img.channels != 3) {
    throw Error("write_pnm: only 1- or 3-channel images are supported");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << (img.channels == 3 ? "P6" : "P5") << '\n'
      << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> buf(img.height * img.width * img.channels);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) {
        const double v = std::min(1.0, std::max(0.0, img.at(b, c, y, x)));
        buf[(y * img.width + x) * img.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing " + path);
}

namespace detail {
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  char ch;
  while (in.get(ch)) {
    if (ch == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(ch);
  }
  return tok;
}
}  // namespace detail

/// Reads an 8-bit binary PPM (P6) or PGM (P5) into a one-image batch.
inline ImageBatch read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  const std::string magic = detail::pnm_token(in);
  if (magic != "P6" && magic != "P5") throw Error(path + ": not a binary PPM/PGM file");
  const std::size_t w = std::stoul(detail::pnm_token(in));
  const std::size_t h = std::stoul(detail::pnm_token(in));
  const int maxval = std::stoi(detail::pnm_token(in));
  if (maxval <= 0 || maxval > 255) throw Error(path + ": only 8-bit images are supported");
  const std::size_t c = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> buf(w * h * c);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw Error(path + ": truncated");
  ImageBatch img(1, c, h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        img.at(0, ch, y, x) = quantize_pixel(buf[(y * w + x) * c + ch] / double(maxval));
  return img;
}

}  // namespace mirl
