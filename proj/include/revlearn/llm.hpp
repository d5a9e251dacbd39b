#pragma once

#include "revlearn/llm/gateway.hpp"
#include "revlearn/llm/prompt.hpp"
