/* Copyright 2026 The dualgan Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include "dualgan/checkpoint.hpp"
#include "dualgan/config.hpp"
#include "dualgan/dataset.hpp"
#include "dualgan/errors.hpp"
#include "dualgan/gradcheck.hpp"
#include "dualgan/image_io.hpp"
#include "dualgan/layers.hpp"
#include "dualgan/metrics.hpp"
#include "dualgan/model.hpp"
#include "dualgan/networks.hpp"
#include "dualgan/ops.hpp"
#include "dualgan/optim.hpp"
#include "dualgan/rng.hpp"
#include "dualgan/tensor.hpp"
