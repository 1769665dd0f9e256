// Copyright 2026 The SPI-GAN Authors.
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

// Umbrella header.

#pragma once

#include "spigan/autodiff.hpp"
#include "spigan/checkpoint.hpp"
#include "spigan/config.hpp"
#include "spigan/data.hpp"
#include "spigan/diffusion.hpp"
#include "spigan/error.hpp"
#include "spigan/gradcheck.hpp"
#include "spigan/losses.hpp"
#include "spigan/metrics.hpp"
#include "spigan/models.hpp"
#include "spigan/nn.hpp"
#include "spigan/node.hpp"
#include "spigan/optim.hpp"
#include "spigan/random.hpp"
#include "spigan/sampling.hpp"
#include "spigan/spi.hpp"
#include "spigan/training.hpp"
#include "spigan/version.hpp"
