// Copyright 2026 The vibkit Authors.
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

#ifndef VIBKIT_RESAMPLE_HPP_
#define VIBKIT_RESAMPLE_HPP_

#include <span>
#include <vector>

namespace vibkit::dsp {

// Band-limited windowed-sinc interpolation with a 64-tap Kaiser window.
//
// Output sample j reads the input at position j * step, so step > 1 plays the
// signal faster (every frequency is multiplied by step). When step > 1 the
// kernel cutoff drops to 1 / step of Nyquist to avoid aliasing. Samples
// outside the input are taken as zero.
std::vector<double> resample_stretch(std::span<const double> x, double step,
                                     std::size_t out_len);

inline constexpr int kSincHalfTaps = 32;

}  // namespace vibkit::dsp

#endif  // VIBKIT_RESAMPLE_HPP_
