/**
 * Copyright 2026 The cdimpute Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef CDIMPUTE_CDIMPUTE_HPP
#define CDIMPUTE_CDIMPUTE_HPP

#include "cdimpute/cdca.hpp"
#include "cdimpute/checkpoint.hpp"
#include "cdimpute/config.hpp"
#include "cdimpute/core.hpp"
#include "cdimpute/data.hpp"
#include "cdimpute/denoiser.hpp"
#include "cdimpute/diffusion.hpp"
#include "cdimpute/fmixup.hpp"
#include "cdimpute/metrics.hpp"
#include "cdimpute/synthetic.hpp"
#include "cdimpute/trainer.hpp"

#endif  // CDIMPUTE_CDIMPUTE_HPP
