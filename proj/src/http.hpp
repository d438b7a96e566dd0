#pragma once

// Single inclusion point for cpp-httplib so every translation unit sees the
// same configuration.
#define CPPHTTPLIB_OPENSSL_SUPPORT
// Bursts of clients queue in the kernel instead of being dropped.
#define CPPHTTPLIB_LISTEN_BACKLOG 1024
#include "httplib.h"
