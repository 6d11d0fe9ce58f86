#pragma once

#define FHLAB_VERSION "0.1.0"
