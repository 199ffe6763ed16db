package toy

import "unsafe"

const ptrSize = 8

type pointer struct {
	p unsafe.Pointer
}

// toAddrPointer converts a pointer to the word after the interface header.
func toAddrPointer(i *int, isptr bool) pointer {
	if isptr {
		return pointer{p: unsafe.Pointer(uintptr(unsafe.Pointer(i)) + ptrSize)}
	}
	return pointer{p: unsafe.Pointer(i)}
}
