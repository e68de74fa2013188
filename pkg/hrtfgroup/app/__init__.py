# hrtfgroup - spatially-grouped personalized HRTF prediction
