from qnc_lab._threads import pin_blas_single_thread

pin_blas_single_thread()
