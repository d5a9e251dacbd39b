#pragma once

#include "revlearn/inference/diagnostics.hpp"
#include "revlearn/inference/dic.hpp"
#include "revlearn/inference/export.hpp"
#include "revlearn/inference/hierarchical.hpp"
#include "revlearn/inference/likelihood.hpp"
#include "revlearn/inference/map_fit.hpp"
#include "revlearn/inference/ppc.hpp"
#include "revlearn/inference/recovery.hpp"
#include "revlearn/inference/transforms.hpp"
