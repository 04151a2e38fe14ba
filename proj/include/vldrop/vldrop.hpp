// Copyright 2026 The vldrop Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "vldrop/error.hpp"
#include "vldrop/rng.hpp"
#include "vldrop/tensor.hpp"
#include "vldrop/autodiff.hpp"
#include "vldrop/dropout.hpp"
#include "vldrop/regularizers.hpp"
#include "vldrop/model.hpp"
#include "vldrop/checkpoint.hpp"
#include "vldrop/optimizer.hpp"
#include "vldrop/stats.hpp"
#include "vldrop/datagen.hpp"
#include "vldrop/protocol.hpp"
#include "vldrop/report.hpp"
#include "vldrop/config.hpp"
